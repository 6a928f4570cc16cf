"""Gauss-Legendre rules and element-wise integration drivers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .splinecore import eval_basis

_RULE_CACHE = {}


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes in (-1, 1) and positive weights summing to 2."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return len(self.nodes)


def gauss_rule(n):
    """n-point Gauss-Legendre rule on [-1, 1], exact for degree <= 2n-1.

    Nodes are found by Newton iteration on the Legendre polynomial P_n from
    Chebyshev initial guesses; weights are 2 / ((1 - x^2) P_n'(x)^2).
    """
    if not 1 <= n <= 64:
        raise ValueError("number of quadrature points must be in [1, 64]")
    if n in _RULE_CACHE:
        return _RULE_CACHE[n]
    if n == 1:
        rule = QuadratureRule(np.zeros(1), np.full(1, 2.0))
        _RULE_CACHE[n] = rule
        return rule

    k = np.arange(n)
    x = np.cos(np.pi * (4 * k + 3) / (4 * n + 2))
    for _ in range(100):
        pn, dpn = _legendre_and_derivative(n, x)
        dx = pn / dpn
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    pn, dpn = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x**2) * dpn**2)
    order = np.argsort(x)
    rule = QuadratureRule(x[order], w[order])
    _RULE_CACHE[n] = rule
    return rule


def _legendre_and_derivative(n, x):
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = n * (x * p - p_prev) / (x**2 - 1.0)
    return p, dp


def element_quadrature(space, points_per_element):
    """Flattened quadrature points and weights over all elements of a space."""
    rule = gauss_rule(points_per_element)
    bps = space.breakpoints
    lo = bps[:-1][:, None]
    hi = bps[1:][:, None]
    xq = (0.5 * (hi - lo) * (rule.nodes[None, :] + 1.0) + lo).ravel()
    wq = (0.5 * (hi - lo) * rule.weights[None, :]).ravel()
    return xq, wq


def integrate_1d(space, integrand, points_per_element=None, max_deriv=0):
    """Accumulate sum_q w_q * integrand(x_q, basis_eval_q) over all elements.

    The integrand may return a scalar or an ndarray of fixed shape; the
    weighted contributions are summed. The default rule uses degree+1 points
    per element (exact for products of two basis functions).
    """
    if points_per_element is None:
        points_per_element = space.degree + 1
    xq, wq = element_quadrature(space, points_per_element)
    total = None
    for x, w in zip(xq, wq):
        ev = eval_basis(space, x, max_deriv=max_deriv)
        val = integrand(x, ev)
        contrib = w * np.asarray(val, dtype=float)
        total = contrib if total is None else total + contrib
    total = np.asarray(total)
    return total if total.shape else float(total)


def moments(space, f, weight=None, points_per_element=None):
    """Vector of inner products <f, B_i> (optionally weighted) by quadrature."""
    if points_per_element is None:
        points_per_element = space.degree + 2
    xq, wq = element_quadrature(space, points_per_element)
    out = np.zeros(space.dimension)
    for x, w in zip(xq, wq):
        ev = eval_basis(space, x)
        scale = w * f(x)
        if weight is not None:
            scale *= weight(x)
        out[ev.indices] += scale * ev.values[0]
    return out
