"""Explicit Runge-Kutta steppers, stability limits, critical timestep,
generalized eigensolver for spectrum studies, and outlier removal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .splinecore import eval_basis

__all__ = [
    "ButcherTableau",
    "DynamicState",
    "SpectrumResult",
    "RK2",
    "RK4",
    "RK6",
    "TABLEAUS",
    "PAPER_CMAX",
    "rk_step",
    "stability_limit",
    "critical_dt",
    "power_max_frequency",
    "max_frequency",
    "eigensolve",
    "outlier_removal",
    "OutlierConstraint",
]


@dataclass(frozen=True)
class ButcherTableau:
    """Explicit Runge-Kutta tableau (strictly lower-triangular stage matrix)."""

    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        if np.max(np.abs(np.triu(a))) > 0.0:
            raise ValueError("tableau must be explicit (strictly lower-triangular)")

    @property
    def stages(self):
        return len(self.b)


# Three-stage second-order scheme (iterated midpoint): R(z) = 1 + z + z^2/2 +
# z^3/4, whose imaginary-axis stability interval is exactly [0, 2]. This makes
# the conventional C_max = 2.0 for second-order explicit runs an actual
# stability limit rather than a convention.
RK2 = ButcherTableau(
    "rk2",
    a=[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.5, 0.0]],
    b=[0.0, 0.0, 1.0],
    c=[0.0, 0.5, 0.5],
    order=2,
)

RK4 = ButcherTableau(
    "rk4",
    a=[
        [0.0, 0.0, 0.0, 0.0],
        [0.5, 0.0, 0.0, 0.0],
        [0.0, 0.5, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ],
    b=[1 / 6, 1 / 3, 1 / 3, 1 / 6],
    c=[0.0, 0.5, 0.5, 1.0],
    order=4,
)

# Eight-stage sixth-order method (Verner) with rational coefficients. Among
# the classical sixth-order tableaus this one has the widest imaginary-axis
# stability interval (~1.305, with |R(iy)| <= 1.00043 out to y = 1.7), which
# matters for wave problems run near the conventional C_max.
RK6 = ButcherTableau(
    "rk6",
    a=[
        [0, 0, 0, 0, 0, 0, 0, 0],
        [1 / 6, 0, 0, 0, 0, 0, 0, 0],
        [4 / 75, 16 / 75, 0, 0, 0, 0, 0, 0],
        [5 / 6, -8 / 3, 5 / 2, 0, 0, 0, 0, 0],
        [-165 / 64, 55 / 6, -425 / 64, 85 / 96, 0, 0, 0, 0],
        [12 / 5, -8, 4015 / 612, -11 / 36, 88 / 255, 0, 0, 0],
        [-8263 / 15000, 124 / 75, -643 / 680, -81 / 250, 2484 / 10625, 0, 0, 0],
        [3501 / 1720, -300 / 43, 297275 / 52632, -319 / 2322, 24068 / 84065, 0,
         3850 / 26703, 0],
    ],
    b=[3 / 40, 0, 875 / 2244, 23 / 72, 264 / 1955, 0, 125 / 11592, 43 / 616],
    c=[0, 1 / 6, 4 / 15, 2 / 3, 5 / 6, 1, 1 / 15, 1],
    order=6,
)

TABLEAUS = {"rk2": RK2, "rk4": RK4, "rk6": RK6}

# Run-time defaults for the critical-timestep constant; the computed
# imaginary-axis limits are logged alongside (they differ for rk4: 2.828).
PAPER_CMAX = {"rk2": 2.0, "rk4": 2.785, "rk6": 3.387}


@dataclass
class DynamicState:
    """Displacement and velocity coefficient grids at a time instant."""

    d: np.ndarray
    v: np.ndarray
    t: float = 0.0


def rk_step(tableau, rhs, state, dt):
    """One explicit RK step of the first-order system (d, v)' = (v, rhs(d)).

    ``rhs`` maps a displacement grid to an acceleration grid. Raises on NaN.
    """
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    a, b = tableau.a, tableau.b
    s = tableau.stages
    kd = []
    kv = []
    for i in range(s):
        di = state.d
        vi = state.v
        for j in range(i):
            if a[i, j] != 0.0:
                di = di + dt * a[i, j] * kd[j]
                vi = vi + dt * a[i, j] * kv[j]
        kd.append(vi)
        kv.append(rhs(di))
    d_new = state.d
    v_new = state.v
    for i in range(s):
        if b[i] != 0.0:
            d_new = d_new + dt * b[i] * kd[i]
            v_new = v_new + dt * b[i] * kv[i]
    if not (np.all(np.isfinite(d_new)) and np.all(np.isfinite(v_new))):
        raise NumericalError(f"non-finite state after step at t={state.t}")
    return DynamicState(d_new, v_new, state.t + dt)


def stability_polynomial(tableau, z):
    """R(z) = 1 + z b^T (I - z A)^{-1} 1 for scalar (complex) z."""
    s = tableau.stages
    mat = np.eye(s, dtype=complex) - z * tableau.a
    k = np.linalg.solve(mat, np.ones(s, dtype=complex))
    return 1.0 + z * np.dot(tableau.b, k)


def stability_limit(tableau, tol=1e-12, scan_step=0.005, cap=8.0):
    """Largest y with |R(i y')| <= 1 + tol for all y' up to y (0 if none)."""
    y = scan_step
    prev = 0.0
    while y <= cap:
        if abs(stability_polynomial(tableau, 1j * y)) > 1.0 + tol:
            lo, hi = prev, y
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if abs(stability_polynomial(tableau, 1j * mid)) > 1.0 + tol:
                    hi = mid
                else:
                    lo = mid
            # an interval below 1e-4 is tolerance slack, not genuine stability
            return lo if lo > 1e-4 else 0.0
        prev = y
        y += scan_step
    return prev


def critical_dt(c_max, omega_max):
    """Largest stable explicit step C_max / omega_max."""
    if omega_max <= 0.0:
        raise ValueError("maximum frequency must be positive")
    return c_max / omega_max


def power_max_frequency(apply_fn, n, tol=1e-8, max_iterations=5000, seed=0, block=4):
    """Largest sqrt(eigenvalue) of a linear operator by block power iteration.

    ``apply_fn`` realizes M^{-1} K on flattened coefficient vectors. A small
    orthonormalized block absorbs the (near-)degenerate mode pairs of
    symmetric domains that stall single-vector iteration. Raises on
    non-convergence, reporting the last two Rayleigh estimates.
    """
    rng = np.random.default_rng(seed)
    block = min(max(block, 1), n)
    V = rng.standard_normal((n, block))
    V, _ = np.linalg.qr(V)
    lam_prev = 0.0
    lam = 0.0
    hits = 0
    for it in range(max_iterations):
        W = np.column_stack([apply_fn(V[:, j]) for j in range(block)])
        # Rayleigh-Ritz estimate; the operator is self-adjoint in the mass
        # metric, so the symmetrized projection has a stable spectrum
        H = V.T @ W
        lam_prev = lam
        lam = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (H + H.T)))))
        norms = np.linalg.norm(W, axis=0)
        if np.max(norms) == 0.0:
            return 0.0, it + 1
        V, _ = np.linalg.qr(W)
        if it > 2 and abs(lam - lam_prev) <= tol * abs(lam):
            hits += 1
            if hits >= 3:
                return float(np.sqrt(abs(lam))), it + 1
        else:
            hits = 0
    raise NumericalError(
        "power iteration did not converge: last Rayleigh estimates "
        f"{lam_prev:.12e}, {lam:.12e}"
    )


def max_frequency(system, outlier=None, tol=1e-8, max_iterations=5000, seed=0):
    """Maximum discrete frequency of a system via matrix-free power iteration.

    The operator is the mass solve composed with the stiffness action of the
    system's mass kind; an optional OutlierConstraint reduces the space first.
    The default tolerance suits isolated top modes; the dense upper edge of
    large tensor-product spectra converges slowly, and callers that only need
    a timestep bound should loosen ``tol``.
    """
    from .assembly import mass_operator, stiffness_apply

    mass = mass_operator(system)
    shape = system.free_shape

    if outlier is None:
        def apply_fn(vec):
            d = vec.reshape(shape)
            return mass.solve(stiffness_apply(system, d)).ravel()

        n = int(np.prod(shape))
        omega, _ = power_max_frequency(apply_fn, n, tol, max_iterations, seed)
        return omega

    reduced_mass = outlier.reduce_mass(system, mass)

    def apply_fn(vec):
        d_red = outlier.unflatten(vec)
        d = outlier.prolong(d_red)
        r = stiffness_apply(system, d)
        return reduced_mass(outlier.restrict(r)).ravel()

    omega, _ = power_max_frequency(apply_fn, outlier.n_reduced, tol, max_iterations, seed)
    return omega


@dataclass(frozen=True)
class SpectrumResult:
    """Sorted nonnegative frequencies of a generalized eigenproblem."""

    frequencies: np.ndarray
    mass_kind: str = ""
    outlier_removed: bool = False

    @property
    def mode_count(self):
        return len(self.frequencies)


def eigensolve(K, M, mass_kind="", outlier_removed=False):
    """Frequencies of K phi = omega^2 M phi for dense symmetric K, SPD M."""
    K = np.asarray(K, dtype=float)
    M = np.asarray(M, dtype=float)
    n = K.shape[0]
    if n > 2000:
        raise ValueError("dense eigensolver capped at N=2000")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NumericalError("mass matrix is not SPD") from None
    vals = scipy.linalg.eigh(K, M, eigvals_only=True)
    floor = -1e-8 * max(1.0, float(np.max(np.abs(vals))))
    if np.min(vals) < floor:
        raise NumericalError(f"negative eigenvalue {np.min(vals):.3e} in spectrum")
    freqs = np.sqrt(np.clip(vals, 0.0, None))
    return SpectrumResult(np.sort(freqs), mass_kind, outlier_removed)


class OutlierConstraint:
    """Sparse basis transformation imposing vanishing even end derivatives.

    Acts on the free (Dirichlet-constrained) coefficients of direction 0 of a
    system; columns of T span the subspace with u^(2k)(a) = u^(2k)(b) = 0 for
    k = 1 .. floor((p-1)/2). For p = 2 there are no admissible constraints and
    the transformation is the identity.
    """

    def __init__(self, system):
        space = system.spaces[0]
        if space.periodic:
            raise ValueError("outlier removal applies to a clamped direction")
        dl, dr = system.dirichlet[0]
        if not (dl and dr):
            raise ValueError("outlier removal expects homogeneous Dirichlet ends")
        p = space.degree
        self.system = system
        self.n_constraints_per_end = max((p - 1) // 2, 0)
        lo, hi = system.free_range(0)
        m = hi - lo
        K = self.n_constraints_per_end
        if K == 0:
            T = np.eye(m)
        else:
            if m < 2 * p:
                raise ValueError("too few free functions for outlier constraints")
            a, b = space.domain
            T = np.zeros((m, m - 2 * K))
            T[: p, : p - K] = self._end_block(space, a, lo, m, p, K, left=True)
            T[p : m - p, p - K : p - K + m - 2 * p] = np.eye(m - 2 * p)
            T[m - p :, m - 2 * K - (p - K) :] = self._end_block(
                space, b, lo, m, p, K, left=False
            )
        self.T = T
        self.shape_full = system.free_shape
        self.shape_reduced = (T.shape[1],) + tuple(system.free_shape[1:])

    def _end_block(self, space, x_end, lo, m, p, K, left):
        # constraint rows: sum_j d_j B_j^(2k)(x_end) = 0 over the p boundary-
        # nearest free functions, k = 1..K; columns of the returned block span
        # the nullspace
        ev = eval_basis(space, x_end, max_deriv=2 * K)
        rows = np.zeros((K, p))
        for k in range(1, K + 1):
            for l, j in enumerate(ev.indices):
                jf = int(j) - lo  # free index
                col = jf if left else jf - (m - p)
                if 0 <= col < p:
                    rows[k - 1, col] = ev.values[2 * k, l]
        _, sv, Vt = np.linalg.svd(rows)
        rank = int(np.sum(sv > sv[0] * 1e-10)) if len(sv) else 0
        return Vt[rank:].T

    @property
    def n_reduced(self):
        return int(np.prod(self.shape_reduced))

    def prolong(self, reduced):
        return np.tensordot(self.T, reduced, axes=(1, 0))

    def restrict(self, free):
        return np.tensordot(self.T.T, free, axes=(1, 0))

    def unflatten(self, vec):
        return vec.reshape(self.shape_reduced)

    def reduce_mass(self, system, mass=None):
        """Reduced-mass solve (T^T M T)^{-1}, direction 0 dense, others intact."""
        red = self.T.T @ self.direction0_mass_dense(system) @ self.T
        inv = np.linalg.inv(red)

        def solve_reduced(reduced_grid):
            out = np.tensordot(inv, reduced_grid, axes=(1, 0))
            return self._other_direction_solve(system, out)

        return solve_reduced

    def direction0_mass_dense(self, system):
        from .assembly import _galerkin_factors

        kind = system.mass_kind
        lo, hi = system.free_range(0)
        if kind == "galerkin_consistent":
            return _galerkin_factors(system)[0].submatrix(lo, hi).to_dense()
        if kind == "customized":
            return np.linalg.inv(system.constrained_duals[0].dense_free())
        if kind == "rowsum_lumped":
            return np.diag(_galerkin_factors(system)[0].rowsums()[lo:hi])
        raise ValueError(f"outlier reduction unsupported for {kind}")

    def _other_direction_solve(self, system, grid):
        if system.ndim == 1:
            return grid
        from .assembly import _galerkin_factors

        kind = system.mass_kind
        if kind == "galerkin_consistent":
            return _galerkin_factors(system)[1].solve(grid.T).T
        if kind == "customized":
            return system.constrained_duals[1].apply_free(grid.T).T
        if kind == "rowsum_lumped":
            rs = _galerkin_factors(system)[1].rowsums()
            return grid / rs[None, :]
        raise ValueError(f"outlier reduction unsupported for {kind}")


def outlier_removal(system):
    """Constraint operator removing spurious high boundary modes (no-op p<3)."""
    return OutlierConstraint(system)
