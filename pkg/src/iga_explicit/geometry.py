"""Geometric mappings from the parametric unit square, with analytic Jacobians,
Jacobian gradients, and the scalar weight field c = det(F) * rho."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GeometryMap:
    """Mapping from the unit square with analytic first and second derivatives.

    All callables accept broadcasting arrays ``(x1, x2)`` and return arrays
    with the tensor components in the leading axes: ``value -> (2, ...)``,
    ``jacobian -> (2, 2, ...)``, ``jacobian_gradient -> (2, 2, 2, ...)`` where
    the trailing index of the gradient is the parametric differentiation
    direction. ``rho`` is a constant density.
    """

    value: callable
    jacobian: callable
    jacobian_gradient: callable
    rho: float = 1.0
    name: str = "map"

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError("density must be positive")


def identity_map(rho=1.0):
    """Identity mapping; F = I, gradient = 0, c = rho."""

    def value(x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.stack([x1, x2])

    def jacobian(x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        F = np.zeros((2, 2) + x1.shape)
        F[0, 0] = 1.0
        F[1, 1] = 1.0
        return F

    def jacobian_gradient(x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.zeros((2, 2, 2) + x1.shape)

    return GeometryMap(value, jacobian, jacobian_gradient, rho=rho, name="identity")


def annulus_map(a, b, rho=1.0):
    """Polar map of the unit square onto the annulus a <= r <= b.

    x1 is the radial coordinate (r = a + (b-a) x1) and x2 the angular one
    (theta = 2 pi x2); det(F) = 2 pi (b-a) r > 0.
    """
    if not 0.0 < a < b:
        raise ValueError("annulus radii must satisfy 0 < a < b")
    dr = b - a
    two_pi = 2.0 * np.pi

    def polar(x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return a + dr * x1, two_pi * x2

    def value(x1, x2):
        r, th = polar(x1, x2)
        return np.stack([r * np.cos(th), r * np.sin(th)])

    def jacobian(x1, x2):
        r, th = polar(x1, x2)
        c, s = np.cos(th), np.sin(th)
        F = np.empty((2, 2) + r.shape)
        F[0, 0] = dr * c
        F[0, 1] = -two_pi * r * s
        F[1, 0] = dr * s
        F[1, 1] = two_pi * r * c
        return F

    def jacobian_gradient(x1, x2):
        r, th = polar(x1, x2)
        c, s = np.cos(th), np.sin(th)
        dF = np.zeros((2, 2, 2) + r.shape)
        # derivative with respect to x1 (radial)
        dF[0, 1, 0] = -two_pi * dr * s
        dF[1, 1, 0] = two_pi * dr * c
        # derivative with respect to x2 (angular)
        dF[0, 0, 1] = -two_pi * dr * s
        dF[0, 1, 1] = -(two_pi**2) * r * c
        dF[1, 0, 1] = two_pi * dr * c
        dF[1, 1, 1] = -(two_pi**2) * r * s
        return dF

    return GeometryMap(value, jacobian, jacobian_gradient, rho=rho, name="annulus")


def weight_field(geo, sample_grid=64):
    """The weight c = det(F) * rho and its parametric gradient.

    The gradient of det(F) uses Jacobi's formula,
    d(det F) = det(F) * tr(F^{-1} dF). Positivity of det(F) is checked on a
    sample grid at construction.
    """
    xs = np.linspace(0.0, 1.0, sample_grid)
    X1, X2 = np.meshgrid(xs, xs, indexing="ij")
    det = _det2(geo.jacobian(X1, X2))
    if np.min(det) <= 0.0:
        raise ValueError(f"non-positive Jacobian determinant (min {np.min(det):.3e})")

    rho = geo.rho

    def c_fn(x1, x2):
        return _det2(geo.jacobian(x1, x2)) * rho

    def grad_c_fn(x1, x2):
        F = geo.jacobian(x1, x2)
        dF = geo.jacobian_gradient(x1, x2)
        det = _det2(F)
        Finv = _inv2(F, det)
        out = np.empty((2,) + det.shape)
        for k in range(2):
            trace = (
                Finv[0, 0] * dF[0, 0, k]
                + Finv[0, 1] * dF[1, 0, k]
                + Finv[1, 0] * dF[0, 1, k]
                + Finv[1, 1] * dF[1, 1, k]
            )
            out[k] = rho * det * trace
        return out

    return c_fn, grad_c_fn


def _det2(F):
    return F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]


def _inv2(F, det=None):
    if det is None:
        det = _det2(F)
    inv = np.empty_like(F)
    inv[0, 0] = F[1, 1] / det
    inv[0, 1] = -F[0, 1] / det
    inv[1, 0] = -F[1, 0] / det
    inv[1, 1] = F[0, 0] / det
    return inv
