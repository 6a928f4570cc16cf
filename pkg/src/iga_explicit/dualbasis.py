"""Grammian assembly, exact and approximate dual bases, boundary-constrained
variants, and quasi-projection.

The approximate dual coefficient matrix S is the symmetric banded minimizer of
the Frobenius distance ||S G - I||_F subject to exact reproduction of all
monomial coefficient vectors up to the polynomial degree. It is symmetric
positive definite (verified, not imposed), has local support, and every row of
the product C = S G sums to one, so rowsum lumping of C yields the identity.

Homogeneous boundary constraints are realized through rank-two Woodbury
updates of the inverse, one per constrained end, without ever forming the
inverse of S densely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .banded import BandedSymmetricMatrix
from .errors import NumericalError
from .quadrature import element_quadrature, moments
from .splinecore import eval_basis, greville

__all__ = [
    "BandedSymmetricMatrix",
    "ApproximateDualBasis",
    "ConstrainedDual",
    "grammian",
    "exact_dual_coeffs",
    "approximate_dual",
    "constrain_dual",
    "quasi_project",
    "dump_matrices",
    "read_matrix",
]


def grammian(space, weight=None, points_per_element=None):
    """Banded matrix of products <B_i, B_j> (optionally with a positive weight)."""
    p = space.degree
    if points_per_element is None:
        points_per_element = p + 1 if weight is None else p + 2
    xq, wq = element_quadrature(space, points_per_element)
    n = space.dimension
    hw = min(p, n - 1) if not space.periodic else p
    G = BandedSymmetricMatrix(n, hw, periodic=space.periodic)
    for x, w in zip(xq, wq):
        if weight is not None:
            wx = weight(x)
            if wx <= 0.0:
                raise ValueError(f"non-positive weight {wx} at quadrature point {x}")
            w = w * wx
        ev = eval_basis(space, x)
        vals = ev.values[0]
        idx = ev.indices
        for a in range(len(idx)):
            for b in range(a, len(idx)):
                ia, ib = idx[a], idx[b]
                if not space.periodic and ia > ib:
                    continue
                G.add_at(ia, ib, w * vals[a] * vals[b])
    return G


def exact_dual_coeffs(space, cap=512):
    """Dense inverse of the Grammian; the coefficients of the exact dual basis.

    Intended as a small-N oracle; refuse beyond the cap.
    """
    if space.dimension > cap:
        raise ValueError(f"exact dual oracle capped at N={cap}")
    return np.linalg.inv(grammian(space).to_dense())


@dataclass(frozen=True)
class ApproximateDualBasis:
    """Banded SPD coefficient matrix S defining locally supported dual functions."""

    space: object
    S: BandedSymmetricMatrix
    halfwidth: int
    G: BandedSymmetricMatrix

    def apply(self, x):
        return self.S.matvec(x)

    @property
    def product_dense(self):
        """Dense C = S G, the parametric Petrov mass of this direction."""
        return self.S.to_dense() @ self.G.to_dense()


def approximate_dual(space, halfwidth=None, feasibility_tol=1e-9):
    """Construct the approximate dual coefficient matrix for a space.

    The half-bandwidth defaults to the degree and is escalated up to twice the
    degree if the duality constraints are infeasible at the requested width.
    SPD-ness is verified by Cholesky after construction and reported as an
    error if violated.
    """
    p = space.degree
    base = p if halfwidth is None else int(halfwidth)
    if base < p:
        base = p
    G = grammian(space)
    last_residual = None
    for hw in range(base, 2 * p + 1):
        if space.periodic:
            S = _periodic_dual(space, G, hw)
        else:
            S = _clamped_dual(space, G, hw, feasibility_tol)
        if S is None:
            last_residual = hw
            continue
        if not S.is_spd():
            raise NumericalError(
                "approximate dual coefficient matrix is not SPD "
                f"(halfwidth {hw}, smallest eigenvalue {S.smallest_eigenvalue():.3e})"
            )
        return ApproximateDualBasis(space, S, hw, G)
    raise NumericalError(
        f"duality constraints infeasible up to halfwidth {2 * p} "
        f"(last attempt {last_residual})"
    )


def _clamped_dual(space, G, hw, tol):
    """Constrained Frobenius minimizer over symmetric banded matrices.

    The duality constraints are assembled per row in the local polynomial
    basis ((x - g_r)/h)^m with g_r the row's Greville point: the same
    constraint set as reproduction of global monomial coefficient vectors,
    but with O(1)-scaled, well-conditioned data. The right-hand sides are
    the local polynomials' own B-spline coefficients, evaluated exactly via
    the de Boor-Fix dual functional.
    """
    n = space.dimension
    p = space.degree
    a, b = space.domain
    hbar = (b - a) / space.n_elements
    Gs = G.to_dense() / hbar
    grev = greville(space)
    knots = space.knot_vector.knots

    # flattened quadrature tabulation (exact for degree-2p integrands)
    xq, wq = element_quadrature(space, p + 1)
    nq = len(xq)
    vals = np.zeros((nq, p + 1))
    firsts = np.zeros(nq, dtype=int)
    for k in range(nq):
        ev = eval_basis(space, xq[k])
        vals[k] = ev.values[0]
        firsts[k] = ev.first_index

    # unique symmetric band entries (i, i+d), d = 0..hw
    entry_id = {}
    for i in range(n):
        for d in range(0, min(hw, n - 1 - i) + 1):
            entry_id[(i, d)] = len(entry_id)
    ns = len(entry_id)

    G2 = Gs @ Gs
    H = np.zeros((ns, ns))
    blin = np.zeros(ns)
    row_ids = []
    row_cols = []
    for r in range(n):
        J = np.arange(max(0, r - hw), min(n, r + hw + 1))
        ids = np.array([entry_id[(min(r, j), abs(r - j))] for j in J])
        row_ids.append(ids)
        row_cols.append(J)
        H[np.ix_(ids, ids)] += G2[np.ix_(J, J)]
        blin[ids] += Gs[J, r]

    pfact = _fact(p)
    A = np.zeros(((p + 1) * n, ns))
    rhs = np.zeros((p + 1) * n)
    for r in range(n):
        J = row_cols[r]
        jlo, jhi = J[0], J[-1]
        sel = np.nonzero((firsts >= jlo - p) & (firsts <= jhi))[0]
        xs = xq[sel]
        ws = wq[sel]
        loc = (xs - grev[r]) / hbar
        # moments of the local polynomials against the banded neighbors
        Mloc = np.zeros((p + 1, len(J)))
        powers = np.vstack([loc**m for m in range(p + 1)])
        for jj, j in enumerate(J):
            off = j - firsts[sel]
            ok = (off >= 0) & (off <= p)
            bj = np.where(ok, vals[sel, np.clip(off, 0, p)], 0.0)
            Mloc[:, jj] = powers @ (ws * bj)
        # de Boor-Fix coefficient of ((x - g_r)/h)^m for basis function r.
        # psi is expanded around g_r (its roots cluster there), which keeps the
        # coefficients h-scaled and avoids cancellation; then
        # psi^(p-m)(g_r) = (p-m)! * [coefficient of u^(p-m)].
        if p > 0:
            cpoly = np.poly(knots[r + 1 : r + p + 1] - grev[r])
        else:
            cpoly = np.array([1.0])
        for m in range(p + 1):
            d_rm = (
                (-1.0) ** m
                * _fact(m)
                * _fact(p - m)
                / (pfact * hbar**m)
                * cpoly[m]
            )
            row = r * (p + 1) + m
            A[row, row_ids[r]] = Mloc[m] / hbar
            rhs[row] = d_rm

    # equilibrate constraint rows so the residual filter acts on O(1) data
    rownorm = np.maximum(np.abs(A).max(axis=1), 1e-300)
    A /= rownorm[:, None]
    rhs /= rownorm

    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    sig0 = sv[0]
    # Filtered pseudo-inverse: keeps genuinely tiny singular directions (the
    # constraint system is consistent but extremely graded), while the exact
    # numerical nullspace is reserved for the Frobenius objective below.
    alpha = 1e-13 * sig0
    filt = sv / (sv**2 + alpha**2)

    def pinv_apply(vec):
        return Vt.T @ (filt * (U.T @ vec))

    s_opt = pinv_apply(rhs)
    scale = max(1.0, np.max(np.abs(rhs)))
    for _ in range(30):
        dr = rhs - A @ s_opt
        if np.max(np.abs(dr)) < 5e-15 * scale:
            break
        s_opt = s_opt + pinv_apply(dr)
    if np.max(np.abs(A @ s_opt - rhs)) > tol * scale:
        return None

    null_mask = sv < 1e-14 * sig0
    Z = Vt[null_mask].T
    if Z.shape[1]:
        Hred = Z.T @ H @ Z
        gred = Z.T @ (blin - H @ s_opt)
        y = np.linalg.solve(Hred, gred)
        s_opt = s_opt + Z @ y

    S = BandedSymmetricMatrix(n, hw)
    for (i, d), k in entry_id.items():
        S.bands[d, i] = s_opt[k] / hbar
    return S


def _periodic_dual(space, G, hw):
    """Circulant coefficient stencil for uniform periodic spaces.

    The symmetric stencil of width hw has hw+1 free values; they are fixed by
    requiring the product of the stencil symbol with the Grammian symbol to be
    tangent to 1 at zero angle through order theta^(2 hw). This matches the
    translation-invariant interior of the clamped construction and gives a
    quasi-projection of the same order.
    """
    n = space.dimension
    g = G.bands[:, 0].copy()
    dev = np.max(np.abs(G.bands - g[:, None]))
    if dev > 1e-12 * max(1.0, np.max(np.abs(g))):
        raise NumericalError("periodic Grammian is not circulant; non-uniform mesh?")

    mc = hw + 1  # tangency conditions at theta = 0, one per stencil entry
    d_g = np.arange(len(g))
    mult_g = np.where(d_g == 0, 1.0, 2.0)
    hbar = (space.domain[1] - space.domain[0]) / space.n_elements
    gs = g / hbar
    g_taylor = np.array(
        [(mult_g * gs * (-1.0) ** m * d_g ** (2 * m) / _fact(2 * m)).sum() for m in range(mc)]
    )
    d_s = np.arange(hw + 1)
    mult_s = np.where(d_s == 0, 1.0, 2.0)
    T = np.array([mult_s * (-1.0) ** m * d_s ** (2 * m) / _fact(2 * m) for m in range(mc)])
    C = np.zeros((mc, hw + 1))
    for m in range(mc):
        for a_ in range(m + 1):
            C[m] += g_taylor[m - a_] * T[a_]
    r = np.zeros(mc)
    r[0] = 1.0
    try:
        stencil = np.linalg.solve(C, r) / hbar
    except np.linalg.LinAlgError:
        return None

    theta = 2.0 * np.pi * np.arange(n) / n
    shat = (mult_s[:, None] * stencil[:, None] * np.cos(np.outer(d_s, theta))).sum(0)
    if np.min(shat) <= 0.0:
        raise NumericalError(
            f"periodic dual stencil symbol not positive (min {np.min(shat):.3e})"
        )
    bands = np.tile(stencil[:, None], (1, n))
    return BandedSymmetricMatrix(n, hw, periodic=True, bands=bands)


def _fact(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


class ConstrainedDual:
    """Dual coefficient operator with homogeneous end constraints.

    Realizes the inverse of the submatrix of S^{-1} with constrained rows and
    columns removed, applied through one rank-two Woodbury update per
    constrained end. Applying the operator to a full moment vector returns
    full-length coefficients with zeros in the constrained slots.
    """

    def __init__(self, parent, left=False, right=False):
        if parent.space.periodic and (left or right):
            raise ValueError("cannot constrain a periodic direction")
        self.parent = parent
        self.left = bool(left)
        self.right = bool(right)
        self.space = parent.space
        n = parent.space.dimension
        self.n = n
        self._updates = []  # (Z, W, Cinv) per constrained end, applied in order

        S = parent.S
        cleared = []
        sides = ([0] if self.left else []) + ([n - 1] if self.right else [])
        for k in sides:
            ek = np.zeros(n)
            ek[k] = 1.0
            # column k of the matrix currently being updated: the inverse of S
            # with previously cleared rows/columns zeroed off the diagonal
            g = S.solve(ek)
            for done in cleared:
                g[done] = 0.0
            u1 = g.copy()
            u1[k] = 0.0
            U = np.stack([u1, -ek], axis=1)
            V = np.stack([-ek, u1], axis=1)
            Z = self._apply_chain(U)
            W = self._apply_chain(V)
            C = np.eye(2) + V.T @ Z
            if abs(np.linalg.det(C)) < 1e-300:
                raise NumericalError("singular capacitance matrix in boundary update")
            self._updates.append((Z, W, np.linalg.inv(C)))
            cleared.append(k)

    def _apply_chain(self, x):
        y = self.parent.S.matvec(x)
        for Z, W, Cinv in self._updates:
            y = y - Z @ (Cinv @ (W.T @ x))
        return y

    @property
    def constrained_indices(self):
        out = []
        if self.left:
            out.append(0)
        if self.right:
            out.append(self.n - 1)
        return out

    @property
    def free_slice(self):
        lo = 1 if self.left else 0
        hi = self.n - 1 if self.right else self.n
        return slice(lo, hi)

    @property
    def n_free(self):
        s = self.free_slice
        return s.stop - s.start

    def apply_full(self, x):
        """Apply to a full-length moment vector; constrained entries are zeroed."""
        x = np.asarray(x, dtype=float)
        y = self._apply_chain(x.reshape(self.n, -1)).reshape(x.shape)
        for k in self.constrained_indices:
            y[k] = 0.0
        return y

    def apply_free(self, x):
        """Apply the restricted inverse to free-length data (vector or columns)."""
        x = np.asarray(x, dtype=float)
        shape = (self.n,) + x.shape[1:]
        full = np.zeros(shape)
        full[self.free_slice] = x
        y = self.apply_full(full)
        return y[self.free_slice]

    def dense_free(self):
        return self.apply_free(np.eye(self.n_free))


def constrain_dual(basis, left=False, right=False):
    """Boundary-constrained view of an approximate dual basis."""
    return ConstrainedDual(basis, left=left, right=right)


def quasi_project(operator, f, weight=None, points_per_element=None):
    """Coefficients of the quasi-projection u_i = sum_j S_ij <f, B_j>.

    ``operator`` is an ApproximateDualBasis or a ConstrainedDual; with the
    latter, constrained coefficients are zeroed (homogeneous end values).
    """
    space = operator.space
    m = moments(space, f, weight=weight, points_per_element=points_per_element)
    if isinstance(operator, ConstrainedDual):
        return operator.apply_full(m)
    return operator.apply(m)


def dump_matrices(basis, directory):
    """Debug dump of the Grammian, the dual coefficients, and their product."""
    import os

    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name, mat in (
        ("grammian", basis.G.to_dense()),
        ("dual_coefficients", basis.S.to_dense()),
        ("dual_grammian_product", basis.product_dense),
    ):
        path = os.path.join(directory, f"{name}.txt")
        _write_matrix(path, mat)
        paths[name] = path
    return paths


def _write_matrix(path, mat):
    with open(path, "w") as fh:
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline().split()
        rows, cols = int(header[0]), int(header[1])
        data = np.array([[float(v) for v in fh.readline().split()] for _ in range(rows)])
    if data.shape != (rows, cols):
        raise ValueError("matrix file shape mismatch")
    return data
