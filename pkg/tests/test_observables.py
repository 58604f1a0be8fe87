import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saklqr import observables as ob

NX, NU = ob.NX, ob.NU


def sample_dicts(seed=0):
    r = np.random.default_rng(seed)
    xs, us = r.normal(size=(300, NX)), r.normal(size=(300, NU))
    return {k: ob.build_dictionary(k, xs, us, seed=seed) for k in ob.KINDS if k != "Raw"}


DICTS = sample_dicts()


def test_combined_single_center_at_origin():
    d = ob.Dictionary("Combined", rbf_centers=np.zeros((1, NX + NU)), rbf_width=1.0)
    psi = ob.lift(np.zeros(NX), np.zeros(NU), d)
    assert psi[-1] == 1.0
    assert np.all(psi[:-1] == 0.0)


def test_combined_dimension():
    assert DICTS["Combined"].dim == 54
    assert [w for _, w in DICTS["Combined"].blocks] == [4, 6, 4, 6, 24, 10]


def test_poly2_square_block():
    d = DICTS["Poly2"]
    psi = ob.lift(np.array([1.0, 2.0, 0.0, 0.0]), np.zeros(NU), d)
    np.testing.assert_array_equal(psi[d.block_slices()["x^2"]], [1, 4, 0, 0])


def test_cross_block_order():
    d = DICTS["Poly2"]
    x, u = np.arange(1.0, 5.0), np.arange(1.0, 7.0)
    np.testing.assert_array_equal(ob.lift(x, u, d)[d.block_slices()["x*u"]], np.outer(x, u).ravel())


def test_poly3_adds_cubic_state_monomials_only():
    extra = DICTS["Poly3"].dim - DICTS["Poly2"].dim
    assert extra == 20  # C(4 + 2, 3)


def test_raw_jacobian_rows_are_identity():
    jx, ju = ob.jacobians(np.ones(NX), np.ones(NU), DICTS["Combined"])
    np.testing.assert_array_equal(jx[:NX], np.eye(NX))
    np.testing.assert_array_equal(ju[NX:NX + NU], np.eye(NU))


def test_rbf_gradient_vanishes_at_center():
    d = DICTS["RBF"]
    c = d.rbf_centers[3]
    jx, ju = ob.jacobians(c[:NX], c[NX:], d)
    row = d.block_slices()["rbf"].start + 3
    assert np.all(jx[row] == 0) and np.all(ju[row] == 0)


def fd_jacobians(x, u, d, h=1e-6):
    jx = np.zeros((d.dim, NX))
    ju = np.zeros((d.dim, NU))
    for i in range(NX):
        e = np.zeros(NX)
        e[i] = h
        jx[:, i] = (ob.lift(x + e, u, d) - ob.lift(x - e, u, d)) / (2 * h)
    for j in range(NU):
        e = np.zeros(NU)
        e[j] = h
        ju[:, j] = (ob.lift(x, u + e, d) - ob.lift(x, u - e, d)) / (2 * h)
    return jx, ju


@pytest.mark.parametrize("kind", sorted(DICTS))
def test_jacobians_match_finite_differences(kind):
    d = DICTS[kind]
    r = np.random.default_rng(5)
    for _ in range(100):
        x, u = r.normal(size=NX), r.normal(size=NU)
        for ana, num in zip(ob.jacobians(x, u, d), fd_jacobians(x, u, d)):
            scale = max(np.max(np.abs(num)), 1.0)
            assert np.max(np.abs(ana - num)) / scale < 1e-5


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        ob.lift(np.array([np.nan, 0, 0, 0]), np.zeros(NU), DICTS["Poly2"])


def test_duplicate_centers_rejected():
    with pytest.raises(ValueError, match="distinct"):
        ob.Dictionary("RBF", rbf_centers=np.zeros((2, NX + NU)))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        ob.Dictionary("Gmm")


def test_construction_is_seeded():
    a = sample_dicts(3)["Combined"]
    b = sample_dicts(3)["Combined"]
    np.testing.assert_array_equal(a.rbf_centers, b.rbf_centers)
    assert a.rbf_width == b.rbf_width


def test_round_trip():
    d = DICTS["Fourier"]
    e = ob.Dictionary.from_dict(d.to_dict())
    x, u = np.ones(NX), -np.ones(NU)
    np.testing.assert_array_equal(ob.lift(x, u, d), ob.lift(x, u, e))


finite = st.floats(-5, 5, allow_nan=False)


@given(arrays(float, NX, elements=finite), arrays(float, NU, elements=finite),
       st.sampled_from(sorted(DICTS)))
def test_dimension_and_raw_block(x, u, kind):
    d = DICTS[kind]
    psi = ob.lift(x, u, d)
    assert psi.shape == (d.dim,) and d.dim > NX
    assert np.all(np.isfinite(psi))
    np.testing.assert_array_equal(psi[:NX], x)  # state recoverable by projection
