"""Geometric mappings, Jacobians, and the weight field c = det(F) rho."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from iga_explicit.geometry import _det2, annulus_map, identity_map, weight_field


def fd_jacobian(geo, x1, x2, h=1e-6):
    F = np.empty((2, 2))
    for k, (d1, d2) in enumerate(((h, 0.0), (0.0, h))):
        up = geo.value(x1 + d1, x2 + d2)
        dn = geo.value(x1 - d1, x2 - d2)
        F[:, k] = (up - dn) / (2 * h)
    return F


def test_identity_map_basics():
    geo = identity_map(rho=2.0)
    F = geo.jacobian(0.3, 0.7)
    assert_allclose(F, np.eye(2))
    assert_allclose(geo.jacobian_gradient(0.3, 0.7), np.zeros((2, 2, 2)))
    c, grad_c = weight_field(geo)
    assert c(0.2, 0.9) == pytest.approx(2.0)
    assert_allclose(grad_c(0.2, 0.9), np.zeros(2), atol=0)


def test_annulus_corner_point():
    geo = annulus_map(2.0, 5.0)
    assert_allclose(geo.value(0.0, 0.0), [2.0, 0.0], atol=1e-15)


def test_annulus_determinant_analytic():
    a, b = 2.0, 5.0
    geo = annulus_map(a, b)
    det = _det2(geo.jacobian(1.0, 0.37))
    assert det == pytest.approx(2 * np.pi * (b - a) * b, rel=1e-14)


def test_annulus_jacobian_matches_finite_differences():
    geo = annulus_map(1.5, 4.0)
    rng = np.random.default_rng(0)
    for x1, x2 in rng.uniform(0.05, 0.95, size=(20, 2)):
        F = geo.jacobian(x1, x2)
        F_fd = fd_jacobian(geo, x1, x2)
        assert_allclose(F, F_fd, rtol=1e-5, atol=1e-7)


def test_annulus_jacobian_gradient_matches_finite_differences():
    geo = annulus_map(1.5, 4.0)
    rng = np.random.default_rng(1)
    h = 1e-6
    for x1, x2 in rng.uniform(0.05, 0.95, size=(20, 2)):
        dF = geo.jacobian_gradient(x1, x2)
        for k, (d1, d2) in enumerate(((h, 0.0), (0.0, h))):
            up = geo.jacobian(x1 + d1, x2 + d2)
            dn = geo.jacobian(x1 - d1, x2 - d2)
            fd = (up - dn) / (2 * h)
            scale = np.abs(fd).max()
            assert_allclose(dF[:, :, k], fd, atol=1e-5 * max(scale, 1.0))


def test_weight_gradient_matches_finite_differences():
    geo = annulus_map(1.0, 3.0, rho=1.7)
    c, grad_c = weight_field(geo)
    rng = np.random.default_rng(2)
    h = 1e-6
    for x1, x2 in rng.uniform(0.05, 0.95, size=(20, 2)):
        g = grad_c(x1, x2)
        fd = np.array(
            [
                (c(x1 + h, x2) - c(x1 - h, x2)) / (2 * h),
                (c(x1, x2 + h) - c(x1, x2 - h)) / (2 * h),
            ]
        )
        assert_allclose(g, fd, rtol=2e-5, atol=1e-6)


def test_weight_independent_of_angle():
    geo = annulus_map(2.0, 5.0)
    c, _ = weight_field(geo)
    x2 = np.linspace(0.0, 1.0, 33)
    vals = c(np.full_like(x2, 0.4), x2)
    assert np.max(np.abs(vals - vals[0])) <= 1e-12


def test_annulus_area_by_pullback():
    a, b = 2.0, 5.0
    geo = annulus_map(a, b)
    nodes, weights = np.polynomial.legendre.leggauss(20)
    x = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    det = _det2(geo.jacobian(X1, X2))
    area = np.einsum("i,j,ij->", w, w, det)
    assert area == pytest.approx(np.pi * (b**2 - a**2), abs=1e-8)


def test_invalid_radii():
    with pytest.raises(ValueError):
        annulus_map(3.0, 2.0)
    with pytest.raises(ValueError):
        annulus_map(0.0, 2.0)


def test_vectorized_evaluation_shapes():
    geo = annulus_map(1.0, 2.0)
    x1 = np.linspace(0, 1, 4)[:, None] * np.ones((1, 3))
    x2 = np.ones((4, 1)) * np.linspace(0, 1, 3)[None, :]
    assert geo.value(x1, x2).shape == (2, 4, 3)
    assert geo.jacobian(x1, x2).shape == (2, 2, 4, 3)
    assert geo.jacobian_gradient(x1, x2).shape == (2, 2, 2, 4, 3)
