"""Univariate B-spline spaces: knot vectors, Cox-de Boor evaluation, Greville
abscissae, and exact coefficient vectors of monomials.

Evaluation follows the half-open element convention [x_k, x_{k+1}) with the
last element closed at the right end. Periodic spaces are realized by index
wraparound on a uniform knot extension and support only maximal smoothness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

CLAMPED = "clamped"
PERIODIC = "periodic"


@dataclass(frozen=True)
class KnotVector:
    """Non-decreasing knot sequence with a polynomial degree."""

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if np.any(np.diff(knots) < 0.0):
            raise ValueError("knots must be non-decreasing")


@dataclass(frozen=True)
class SplineSpace:
    """Space of univariate splines spanned by B-splines on a knot vector.

    For clamped spaces ``dimension = len(knots) - degree - 1``. For periodic
    spaces the knot vector is the uniform extension of the base partition and
    ``dimension`` equals the number of elements; basis indices wrap modulo the
    dimension.
    """

    knot_vector: KnotVector
    boundary_kind: str
    dimension: int

    @property
    def degree(self):
        return self.knot_vector.degree

    @property
    def periodic(self):
        return self.boundary_kind == PERIODIC

    @property
    def domain(self):
        p = self.degree
        k = self.knot_vector.knots
        return float(k[p]), float(k[len(k) - p - 1])

    @property
    def breakpoints(self):
        a, b = self.domain
        k = self.knot_vector.knots
        p = self.degree
        interior = k[p : len(k) - p]
        return np.unique(interior)

    @property
    def n_elements(self):
        return len(self.breakpoints) - 1


@dataclass(frozen=True)
class BasisEval:
    """Values (and derivatives) of the non-vanishing B-splines at one point.

    ``values[k, l]`` is the k-th derivative of basis function ``indices[l]``.
    """

    first_index: int
    values: np.ndarray
    indices: np.ndarray


def make_space(breakpoints, degree, regularity=None, boundary_kind=CLAMPED):
    """Build a spline space from breakpoints, degree and interior regularity.

    ``regularity`` may be None (maximal smoothness, degree-1), a scalar applied
    at every interior breakpoint, or a sequence with one value per interior
    breakpoint. Periodic spaces require a uniform partition and maximal
    smoothness.
    """
    bps = np.asarray(breakpoints, dtype=float)
    if bps.ndim != 1 or len(bps) < 2:
        raise ValueError("need at least two breakpoints")
    if np.any(np.diff(bps) <= 0.0):
        raise ValueError("breakpoints must be strictly increasing")
    p = int(degree)
    if p < 0:
        raise ValueError("degree must be non-negative")
    n_interior = len(bps) - 2

    if p == 0:
        # piecewise constants: interior knots appear once, no continuity choices
        if regularity is not None:
            raise ValueError("degree-0 splines admit no interior continuity")
        regs = [-1] * n_interior
    elif regularity is None:
        regs = [p - 1] * n_interior
    elif np.ndim(regularity) == 0:
        regs = [int(regularity)] * n_interior
    else:
        regs = [int(r) for r in regularity]
        if len(regs) != n_interior:
            raise ValueError("one regularity value per interior breakpoint required")
    if p >= 1:
        for r in regs:
            if not 0 <= r <= p - 1:
                raise ValueError(f"regularity {r} outside [0, {p - 1}]")

    if boundary_kind == CLAMPED:
        parts = [np.full(p + 1, bps[0])]
        for k in range(1, len(bps) - 1):
            parts.append(np.full(p - regs[k - 1], bps[k]))
        parts.append(np.full(p + 1, bps[-1]))
        knots = np.concatenate(parts)
        dim = len(knots) - p - 1
        return SplineSpace(KnotVector(knots, p), CLAMPED, dim)

    if boundary_kind == PERIODIC:
        h = np.diff(bps)
        if not np.allclose(h, h[0], rtol=1e-12, atol=1e-14):
            raise ValueError("periodic spaces require a uniform partition")
        if any(r != p - 1 for r in regs):
            raise ValueError("periodic spaces require maximal smoothness")
        n_el = len(bps) - 1
        if n_el <= 2 * p:
            raise ValueError("periodic space needs more elements than 2*degree")
        step = float(h[0])
        ext = bps[0] + step * np.arange(-p, n_el + p + 1)
        return SplineSpace(KnotVector(ext, p), PERIODIC, n_el)

    raise ValueError(f"unknown boundary kind {boundary_kind!r}")


def uniform_space(n_elements, degree, a=0.0, b=1.0, boundary_kind=CLAMPED):
    """Uniform maximal-smoothness space on [a, b] with ``n_elements`` elements."""
    return make_space(np.linspace(a, b, n_elements + 1), degree, None, boundary_kind)


def _find_span(knots, degree, x):
    lo = degree
    hi = len(knots) - degree - 2
    mu = int(np.searchsorted(knots, x, side="right")) - 1
    return min(max(mu, lo), hi)


def _ders_basis(knots, p, mu, x, nd):
    """All non-vanishing B-splines and derivatives up to order nd at x (span mu)."""
    ndu = np.empty((p + 1, p + 1))
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - knots[mu + 1 - j]
        right[j] = knots[mu + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nd + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a = np.empty((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nd + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1

    fac = float(p)
    for k in range(1, nd + 1):
        ders[k, :] *= fac
        fac *= p - k
    return ders


def eval_basis(space, x, max_deriv=0):
    """Evaluate the non-vanishing basis functions and derivatives at ``x``."""
    p = space.degree
    if max_deriv > p:
        raise ValueError("max_deriv exceeds the polynomial degree")
    knots = space.knot_vector.knots
    a, b = space.domain
    if space.periodic:
        length = b - a
        xw = a + (x - a) % length
        if xw >= b:  # guard against float wrap landing on b
            xw -= length
        n_el = space.n_elements
        h = length / n_el
        k = min(int((xw - a) / h), n_el - 1)
        mu = k + p
        values = _ders_basis(knots, p, mu, xw, max_deriv) if p > 0 else _deg0(max_deriv)
        indices = (k + np.arange(p + 1)) % space.dimension
        return BasisEval(int(k % space.dimension), values, indices)

    if x < a - 1e-12 or x > b + 1e-12:
        raise ValueError(f"evaluation point {x} outside domain [{a}, {b}]")
    x = min(max(x, a), b)
    mu = _find_span(knots, p, x)
    if p > 0:
        values = _ders_basis(knots, p, mu, x, max_deriv)
    else:
        values = _deg0(max_deriv)
    first = mu - p
    return BasisEval(first, values, first + np.arange(p + 1))


def _deg0(max_deriv):
    values = np.zeros((max_deriv + 1, 1))
    values[0, 0] = 1.0
    return values


def greville(space):
    """Greville abscissae (knot averages); clamped spaces only."""
    if space.periodic:
        raise ValueError("Greville points are defined here for clamped spaces only")
    p = space.degree
    knots = space.knot_vector.knots
    n = space.dimension
    if p == 0:
        bps = space.breakpoints
        return 0.5 * (bps[:-1] + bps[1:])
    return np.array([knots[i + 1 : i + p + 1].mean() for i in range(n)])


def monomial_coefficients(space, q):
    """Coefficients c with sum_i c_i B_i(x) = x**q, exact for 0 <= q <= degree.

    Solved by collocation at the Greville abscissae, which is a banded system
    and exact because x**q lies in the space.
    """
    p = space.degree
    if not 0 <= q <= p:
        raise ValueError("monomial degree must satisfy 0 <= q <= degree")
    if space.periodic:
        raise ValueError("monomial coefficients require a clamped space")
    n = space.dimension
    if q == 0:
        return np.ones(n)
    g = greville(space)
    ab = np.zeros((2 * p + 1, n))
    for i, x in enumerate(g):
        ev = eval_basis(space, x)
        for l, j in enumerate(ev.indices):
            ab[p + i - j, j] += ev.values[0, l]
    return solve_banded((p, p), ab, g**q)
