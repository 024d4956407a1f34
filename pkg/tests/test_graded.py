import numpy as np
import pytest

import oracles as O
from dudley.errors import DegeneratePair, InvalidParams, ZeroElement
from dudley.graded import (GradedIndex, angular, axial_cone, bch_alpha_beta, bch_limit,
                           bch_rescaled, cone_contains, dilate, graded_dimension, hnorm,
                           quasi_triangle_constant, random_elements, relative_coords)
from dudley.lorentz import AlgebraElement, GroupElement, exp_algebra, group_mul, n_slots


@pytest.mark.parametrize("d,Q", [(2, 12), (3, 20), (4, 30), (5, 42), (6, 56)])
def test_graded_dimension(d, Q):
    assert graded_dimension(d) == Q
    g = GradedIndex(d)
    assert sum(g.orders) == Q
    assert g.layer_sizes == (d, 1 + d * (d - 1) // 2, d)
    assert list(g.orders) == sorted(g.orders)


def test_slot_names():
    assert GradedIndex(2).names == ("u1", "u2", "u0", "u12", "u10", "u20")


def test_dilate_layers():
    A = AlgebraElement([1, 0, 1, 0, 1, 0], 2)
    np.testing.assert_array_equal(dilate(2.0, A).coords, [2, 0, 4, 0, 8, 0])
    u = np.random.default_rng(0).standard_normal((5, 6))
    np.testing.assert_allclose(dilate(0.3, dilate(0.7, u, 2), 2), dilate(0.21, u, 2), rtol=1e-14)
    np.testing.assert_array_equal(dilate(1.0, u, 2), u)
    with pytest.raises(InvalidParams):
        dilate(0.0, u, 2)


@pytest.mark.parametrize("d", [2, 3, 6])
def test_hnorm_matches_formula_and_homogeneity(d):
    u = np.random.default_rng(d).standard_normal((50, n_slots(d)))
    np.testing.assert_allclose(hnorm(u, d), O.graded_norm(u, d), rtol=1e-12)
    for eps in (1e-4, 0.5, 30.0):
        np.testing.assert_allclose(hnorm(dilate(eps, u, d), d), eps * hnorm(u, d), rtol=1e-12)
    assert hnorm(AlgebraElement.zero(d)) == 0.0
    e1 = np.zeros(n_slots(d))
    e1[0] = 1
    assert hnorm(e1, d) == 1.0


def test_hnorm_no_overflow_for_large_q():
    u = np.full(n_slots(6), 1e3)
    assert np.isfinite(hnorm(u, 6))


def test_angular():
    u = np.random.default_rng(2).standard_normal((20, 6))
    th = angular(u, 2)
    np.testing.assert_allclose(hnorm(th, 2), 1.0, atol=1e-12)
    np.testing.assert_allclose(angular(dilate(0.1, u, 2), 2), th, atol=1e-12)
    np.testing.assert_allclose(angular(th, 2), th, atol=1e-12)
    np.testing.assert_allclose(angular(np.array([3.0, 0, 0, 0, 0, 0]), 2), [1, 0, 0, 0, 0, 0])
    with pytest.raises(ZeroElement):
        angular(AlgebraElement.zero(2))


def test_relative_coords_left_invariance():
    rng = np.random.default_rng(4)
    a, b, h = (exp_algebra(AlgebraElement(0.3 * rng.standard_normal(6), 2)) for _ in range(3))
    r1 = relative_coords(a, b)
    r2 = relative_coords(group_mul(h, a), group_mul(h, b))
    np.testing.assert_allclose(r1.coords, r2.coords, atol=1e-10)
    assert hnorm(relative_coords(a, a)) < 1e-12


def test_bch_limit_against_numeric_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        u, v = 0.6 * rng.standard_normal(6), 0.6 * rng.standard_normal(6)
        w = bch_limit(u, v, 2)
        errs = [np.abs(O.bch_numeric(u, v, e, 2) - w).max() for e in (0.1, 0.05, 0.025)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 5e-3
        np.testing.assert_allclose(bch_rescaled(u, v, 0.025, 2)[0], O.bch_numeric(u, v, 0.025, 2),
                                   atol=1e-10)


def test_bch_limit_structure():
    rng = np.random.default_rng(6)
    u, v = rng.standard_normal(6), rng.standard_normal(6)
    # the rotation correction is antisymmetric in (u, v)
    cu = bch_limit(u, v, 2)[3] - (v[3] - u[3])
    cv = bch_limit(v, u, 2)[3] - (u[3] - v[3])
    assert np.isclose(cu, -cv)
    z = np.zeros(6)
    np.testing.assert_array_equal(bch_limit(z, v, 2), v)
    a, b = bch_alpha_beta(AlgebraElement(z, 2), AlgebraElement(v, 2))
    assert np.isclose(a, hnorm(v, 2))
    with pytest.raises(DegeneratePair):
        bch_alpha_beta(u, u, 2)


def test_quasi_triangle_constant_bounded():
    c0 = quasi_triangle_constant(5000, 1, 2, 0.1)
    assert 0.5 < c0 < 10


def test_random_elements_radius():
    U = random_elements(np.random.default_rng(0), 100, 3, 0.2)
    assert np.all(hnorm(U, 3) <= 0.2 + 1e-12)


def test_cone_membership():
    cone = axial_cone(2, 0.3)
    e = GroupElement.identity(2)
    assert not cone_contains(cone, e)
    u0 = AlgebraElement([0, 0, 1.0, 0, 0, 0], 2)
    assert cone_contains(cone, exp_algebra(u0))
    U = np.random.default_rng(7).standard_normal((200, 6))
    inside = cone.contains_coords(U)
    for eps in (0.01, 0.5, 3.0):
        np.testing.assert_array_equal(cone.contains_coords(dilate(eps, U, 2)), inside)
    past = axial_cone(2, 0.3, past=True)
    assert not past.contains_coords(np.array([[0, 0, 1.0, 0, 0, 0]]))[0]
    with pytest.raises(InvalidParams):
        axial_cone(2, 0.0)
