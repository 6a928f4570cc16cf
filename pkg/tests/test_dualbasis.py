"""Grammian, exact and approximate dual bases, Woodbury constraints, quasi-projection."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from oracle_utils import gauss_panels, naive_all_values, spline_l2_error

from iga_explicit.dualbasis import (
    approximate_dual,
    constrain_dual,
    dump_matrices,
    exact_dual_coeffs,
    grammian,
    quasi_project,
    read_matrix,
)
from iga_explicit.quadrature import moments
from iga_explicit.splinecore import PERIODIC, make_space, monomial_coefficients, uniform_space


def test_grammian_degree0_is_diag_h():
    space = uniform_space(5, 0)
    G = grammian(space)
    assert_allclose(G.to_dense(), np.diag(np.full(5, 0.2)), atol=1e-15)


def test_grammian_hat_interior_row():
    space = uniform_space(6, 1)
    h = 1.0 / 6.0
    G = grammian(space).to_dense()
    assert_allclose(G[3, 2:5], [h / 6, 4 * h / 6, h / 6], atol=1e-15)


def test_grammian_spd_and_symmetric():
    space = make_space([0.0, 0.3, 0.55, 1.0], 3)
    G = grammian(space)
    dense = G.to_dense()
    assert np.array_equal(dense, dense.T)
    assert G.is_spd()


def test_exact_dual_degree0():
    space = uniform_space(4, 0)
    assert_allclose(exact_dual_coeffs(space), np.diag(np.full(4, 4.0)), atol=1e-12)


def test_exact_dual_inverse_property():
    space = uniform_space(7, 3)
    Ginv = exact_dual_coeffs(space)
    G = grammian(space).to_dense()
    assert np.max(np.abs(G @ Ginv - np.eye(7 + 3))) <= 1e-10


def test_exact_dual_biorthogonal_by_quadrature():
    # <lambda_i, B_j> assembled with an independent composite Gauss rule
    space = uniform_space(8, 2)  # N = 10
    Ginv = exact_dual_coeffs(space)
    n = space.dimension

    def pair(i, j):
        def f(x):
            vals = naive_all_values(space, x)
            lam = Ginv[i] @ vals
            return lam * vals[j]

        return gauss_panels(f, 0.0, 1.0, n_panels=64, n_pts=6)

    for i in range(0, n, 3):
        for j in range(n):
            assert abs(pair(i, j) - (1.0 if i == j else 0.0)) <= 1e-10


def test_exact_dual_cap():
    space = uniform_space(30, 2)
    with pytest.raises(ValueError):
        exact_dual_coeffs(space, cap=16)


@pytest.mark.parametrize("degree", [2, 3, 4, 5])
def test_polynomial_duality_constraints(degree):
    space = uniform_space(40 - degree, degree)  # N = 40
    dual = approximate_dual(space)
    G = dual.G.to_dense()
    S = dual.S.to_dense()
    Ginv = np.linalg.inv(G)
    for q in range(degree + 1):
        c = monomial_coefficients(space, q)
        # independent oracle: c must equal G^{-1} times the moment vector of x^q
        m = moments(space, lambda x: x**q, points_per_element=degree + 3)
        assert_allclose(Ginv @ m, c, atol=1e-10)
        assert np.max(np.abs(S @ (G @ c) - c)) <= 1e-10


@pytest.mark.parametrize("degree", [2, 3, 5])
def test_rowsum_of_product_is_one(degree):
    space = uniform_space(25, degree)
    dual = approximate_dual(space)
    C = dual.product_dense
    assert np.max(np.abs(C.sum(axis=1) - 1.0)) <= 1e-12


def test_rowsum_lumping_of_product_is_identity(degree=3):
    space = uniform_space(20, degree)
    dual = approximate_dual(space)
    C = dual.product_dense
    lumped = np.diag(C.sum(axis=1))
    assert np.max(np.abs(lumped - np.eye(space.dimension))) <= 1e-12


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_single_element_gives_exact_inverse(degree):
    space = make_space([0.0, 1.0], degree)
    dual = approximate_dual(space)
    Ginv = np.linalg.inv(dual.G.to_dense())
    assert_allclose(dual.S.to_dense(), Ginv, rtol=1e-9, atol=1e-9 * np.abs(Ginv).max())


def test_dual_matrix_symmetric_by_storage():
    space = uniform_space(12, 3)
    S = approximate_dual(space).S.to_dense()
    assert np.array_equal(S, S.T)


def test_customized_mass_equivalence_small():
    # solving with the inverse of S equals applying S
    space = uniform_space(9, 2)
    dual = approximate_dual(space)
    Ghat = np.linalg.inv(dual.S.to_dense())
    rng = np.random.default_rng(8)
    f = rng.normal(size=space.dimension)
    assert_allclose(np.linalg.solve(Ghat, f), dual.apply(f), atol=1e-10)


def test_unconstrained_view_equals_plain_apply():
    space = uniform_space(10, 3)
    dual = approximate_dual(space)
    view = constrain_dual(dual)
    rng = np.random.default_rng(9)
    x = rng.normal(size=space.dimension)
    assert_allclose(view.apply_full(x), dual.apply(x), atol=0)


@pytest.mark.parametrize("left,right", [(True, False), (False, True), (True, True)])
@pytest.mark.parametrize("degree", [2, 3, 4])
def test_woodbury_matches_dense_submatrix_inverse(degree, left, right):
    space = uniform_space(20, degree)  # N <= 40 oracle regime
    dual = approximate_dual(space)
    n = space.dimension
    Ghat = np.linalg.inv(dual.S.to_dense())
    lo = 1 if left else 0
    hi = n - 1 if right else n
    oracle = np.linalg.inv(Ghat[lo:hi, lo:hi])
    con = constrain_dual(dual, left=left, right=right)
    assert_allclose(con.dense_free(), oracle, atol=1e-10 * np.abs(oracle).max())


@pytest.mark.parametrize("degree", [2, 3, 4, 5])
def test_constrained_projection_reproduces_vanishing_polynomials(degree):
    space = uniform_space(14, degree)
    dual = approximate_dual(space)
    con = constrain_dual(dual, left=True, right=True)

    def f(x):
        return x * (1.0 - x) * x ** (degree - 2)

    coeffs = quasi_project(con, f)
    err = spline_l2_error(space, coeffs, f, n_panels=80, n_pts=6)
    assert err <= 1e-10
    assert coeffs[0] == 0.0 and coeffs[-1] == 0.0


@pytest.mark.parametrize("degree", [2, 3, 4])
def test_single_side_constraint_reproduces(degree):
    space = uniform_space(11, degree)
    dual = approximate_dual(space)
    con = constrain_dual(dual, left=True)
    coeffs = quasi_project(con, lambda x: x**degree)
    err = spline_l2_error(space, coeffs, lambda x: x**degree)
    assert err <= 1e-10


@pytest.mark.parametrize("degree", [2, 3, 5])
def test_quasi_projection_monomial_exactness(degree):
    space = uniform_space(10, degree)
    dual = approximate_dual(space)
    for q in range(degree + 1):
        coeffs = quasi_project(dual, lambda x, q=q: x**q)
        assert_allclose(coeffs, monomial_coefficients(space, q), atol=1e-10)


def test_quasi_projection_zero():
    space = uniform_space(6, 2)
    dual = approximate_dual(space)
    assert_allclose(quasi_project(dual, lambda x: 0.0), np.zeros(space.dimension), atol=0)


def test_quasi_projection_convergence_rate():
    errs = []
    for n_el in (10, 20, 40):
        space = uniform_space(n_el, 3)
        dual = approximate_dual(space)
        coeffs = quasi_project(dual, lambda x: np.sin(np.pi * x))
        errs.append(spline_l2_error(space, coeffs, lambda x: np.sin(np.pi * x)))
    slopes = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(slopes) >= 3.8


def test_periodic_dual_spd_and_rowsum():
    space = uniform_space(16, 3, boundary_kind=PERIODIC)
    dual = approximate_dual(space)
    assert dual.S.is_spd()
    C = dual.product_dense
    assert np.max(np.abs(C.sum(axis=1) - 1.0)) <= 1e-12


def test_periodic_quasi_projection_rate():
    f = lambda x: np.sin(2 * np.pi * x)
    errs = []
    for n_el in (16, 32, 64):
        space = uniform_space(n_el, 3, boundary_kind=PERIODIC)
        dual = approximate_dual(space)
        coeffs = quasi_project(dual, f)
        errs.append(spline_l2_error(space, coeffs, f, n_panels=128, n_pts=6))
    slope = np.log2(errs[0] / errs[1])
    assert slope >= 3.5
    assert np.log2(errs[1] / errs[2]) >= 3.5


def test_constraining_periodic_rejected():
    space = uniform_space(16, 2, boundary_kind=PERIODIC)
    dual = approximate_dual(space)
    with pytest.raises(ValueError):
        constrain_dual(dual, left=True)


def test_dump_and_read_roundtrip(tmp_path):
    space = uniform_space(6, 2)
    dual = approximate_dual(space)
    paths = dump_matrices(dual, tmp_path)
    for name, dense in (
        ("grammian", dual.G.to_dense()),
        ("dual_coefficients", dual.S.to_dense()),
        ("dual_grammian_product", dual.product_dense),
    ):
        assert_allclose(read_matrix(paths[name]), dense, atol=0)
