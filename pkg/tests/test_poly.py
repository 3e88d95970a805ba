import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irmbench import poly
from irmbench.poly import PolyFeatureMap


def _brute_zeta(w, p):
    """Monomials built by explicit index tuples, row-major."""
    out = []
    for i in range(1, p + 1):
        for idx in itertools.product(range(len(w)), repeat=i):
            out.append(np.prod([w[k] for k in idx]))
    return np.array(out)


def test_degree_one_identity():
    np.testing.assert_array_equal(poly.zeta(PolyFeatureMap(2, 1), [3.0, 4.0]), [3.0, 4.0])


def test_degree_two_expansion():
    np.testing.assert_array_equal(poly.zeta(PolyFeatureMap(2, 2), [1.0, 2.0]), [1, 2, 1, 2, 2, 4])


@pytest.mark.parametrize("a,p", [(1, 4), (2, 3), (3, 3), (4, 2)])
def test_zeta_matches_index_enumeration(a, p):
    w = np.random.default_rng(a * 10 + p).standard_normal(a)
    np.testing.assert_allclose(poly.zeta(PolyFeatureMap(a, p), w), _brute_zeta(w, p), rtol=1e-14)


def test_zeta_norm_identity():
    w = np.random.default_rng(0).standard_normal(3)
    z = poly.zeta(PolyFeatureMap(3, 3), w)
    r = w @ w
    assert z @ z == pytest.approx(r + r**2 + r**3, rel=1e-12)


@pytest.mark.parametrize("a,p,dim", [(2, 1, 2), (2, 2, 6), (3, 3, 39), (10, 4, 11110)])
def test_out_dim_closed_form(a, p, dim):
    assert poly.lifted_dim(a, p) == dim
    if dim <= 10_000:
        assert PolyFeatureMap(a, p).out_dim == dim


def test_feature_map_limits():
    with pytest.raises(ValueError):
        PolyFeatureMap(2, 5)
    with pytest.raises(ValueError):
        PolyFeatureMap(2, 0)
    with pytest.raises(ValueError):
        PolyFeatureMap(10, 4)
    with pytest.raises(ValueError, match="length"):
        poly.zeta(PolyFeatureMap(2, 2), [1.0, 2.0, 3.0])


def test_zeta_rows():
    X = np.random.default_rng(1).standard_normal((4, 2))
    fm = PolyFeatureMap(2, 3)
    np.testing.assert_array_equal(poly.zeta_rows(fm, X), np.vstack([poly.zeta(fm, x) for x in X]))


def test_identity_lift():
    np.testing.assert_array_equal(poly.lift_scrambler(np.eye(2), 3), np.eye(14))


def test_lift_requires_square():
    with pytest.raises(ValueError, match="square"):
        poly.lift_scrambler(np.ones((2, 3)), 2)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_lifted_norm_is_max_power(p):
    S = np.random.default_rng(p).standard_normal((3, 3))
    s = np.linalg.norm(S, 2)
    assert np.linalg.norm(poly.lift_scrambler(S, p), 2) == pytest.approx(max(s**i for i in range(1, p + 1)),
                                                                          rel=1e-10)


def test_lift_commutes_with_zeta():
    rng = np.random.default_rng(5)
    S, z = rng.standard_normal((2, 2)), rng.standard_normal(2)
    fm = PolyFeatureMap(2, 2)
    np.testing.assert_allclose(poly.lift_scrambler(S, 2) @ poly.zeta(fm, z), poly.zeta(fm, S @ z),
                               rtol=0, atol=1e-10)


def test_lift_commutes_with_zeta_many():
    rng = np.random.default_rng(6)
    for _ in range(200):
        m, p = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        S, z = rng.standard_normal((m, m)), rng.standard_normal(m)
        fm = PolyFeatureMap(m, p)
        lhs = poly.lift_scrambler(S, p) @ poly.zeta(fm, z)
        rhs = poly.zeta(fm, S @ z)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


def test_unscrambler_trivial():
    St = np.hstack([np.eye(2), np.zeros((2, 1))])
    np.testing.assert_array_equal(poly.lift_unscrambler(St, 1), St)


def test_unscrambler_recovers_causal_monomials():
    rng = np.random.default_rng(7)
    c, d = 2, 1
    S = rng.standard_normal((3, 3))
    St = np.linalg.inv(S)[:c]
    z = rng.standard_normal(3)
    lifted = poly.lift_unscrambler(St, 2, n=3)
    np.testing.assert_allclose(lifted @ poly.zeta(PolyFeatureMap(3, 2), S @ z),
                               poly.zeta(PolyFeatureMap(c, 2), z[:c]), rtol=0, atol=1e-9)


def test_unscrambler_dimension_mismatch():
    with pytest.raises(ValueError):
        poly.lift_unscrambler(np.ones((2, 3)), 2, n=4)
    with pytest.raises(ValueError):
        poly.lift_unscrambler(np.ones((3, 2)), 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
def test_mixed_product(seed, m, n, k, l):
    rng = np.random.default_rng(seed)
    A, C = rng.standard_normal((m, n)), rng.standard_normal((n, k))
    B, D = rng.standard_normal((l, m)), rng.standard_normal((m, n))
    np.testing.assert_allclose(np.kron(A, B) @ np.kron(C, D), np.kron(A @ C, B @ D), rtol=0, atol=1e-10)


@pytest.mark.parametrize("i", [1, 2, 3])
def test_operator_norm_power_law(i):
    S = np.random.default_rng(i + 20).standard_normal((3, 3))
    base = poly.operator_norm(S)
    assert base == pytest.approx(np.linalg.norm(S, 2), rel=1e-10)
    assert poly.operator_norm(poly.kron_power(S, i)) == pytest.approx(base**i, rel=1e-8)
