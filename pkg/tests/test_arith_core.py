import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heckevirt.arith_core import (HPoint, decode, gamma0_level, gamma_level, gamma_sigma,
                                  height, identity, in_gamma, inv, moebius, mul, normalize,
                                  parse_level, power, principal_level, psl2_codes, psl2_order,
                                  reduce_to_F)
from heckevirt.errors import BadDenominator, NegativeDeterminant, NotInGroup, SingularMatrix

from conftest import el
from oracles import psl2_mod_order


class TestNormalize:
    def test_fractions_cleared(self):
        g = normalize([["1/2", 0], [0, 1]], 2)
        assert g.entries == (1, 0, 0, 2)

    def test_scalar_class(self):
        assert normalize([[2, 0], [0, 2]], 2) == identity(2)
        assert normalize([[-1, 0], [0, -1]], 3) == identity(3)

    def test_sign_convention(self):
        g = normalize([[0, -1], [1, 0]], 2)
        assert g.entries == (0, 1, -1, 0)

    @pytest.mark.parametrize("raw, exc", [
        ([[1, 2], [2, 4]], SingularMatrix),
        ([["1/3", 0], [0, 1]], BadDenominator),
        ([[3, 0], [0, 1]], NotInGroup),
    ])
    def test_rejects(self, raw, exc):
        with pytest.raises(exc):
            normalize(raw, 2)

    def test_negative_determinant_kept(self):
        g = normalize([[0, 1], [2, 0]], 2)
        assert g.det == -2


def test_group_law_and_inverse():
    a, b = el(1, 1, 0, 1), el(1, 0, 0, 2)
    assert mul(a, inv(a)) == identity(2)
    assert mul(mul(a, b), inv(b)) == a
    assert power(a, 3) == el(1, 3, 0, 1)
    assert in_gamma(a) and not in_gamma(b)
    assert height(el(3, 5, 1, 2)) == 5


def test_moebius_example():
    w, j = moebius(el(1, 0, 0, 2), HPoint(0.0, 2.0))
    assert math.isclose(w.x, 0.0, abs_tol=1e-15) and math.isclose(w.y, 1.0)
    assert j == 2


def test_moebius_rejects_negative_det():
    with pytest.raises(NegativeDeterminant):
        moebius(normalize([[0, 1], [2, 0]], 2), HPoint(0.0, 1.0))


def test_reduce_translation():
    z0, g = reduce_to_F(HPoint(5.0, 1.0))
    assert math.isclose(z0.x, 0.0, abs_tol=1e-12) and math.isclose(z0.y, 1.0)
    assert g == el(1, -5, 0, 1)


@settings(max_examples=60, deadline=None)
@given(st.floats(-30, 30), st.floats(1e-3, 5))
def test_reduce_lands_in_F(x, y):
    z0, g = reduce_to_F(HPoint(x, y))
    assert abs(z0.x) <= 0.5 + 1e-9
    assert z0.x ** 2 + z0.y ** 2 >= 1 - 1e-9
    w, _ = moebius(g, HPoint(x, y))
    assert abs(w.z - z0.z) <= 1e-8 * max(1.0, abs(z0.z))


class TestFiniteQuotients:
    @pytest.mark.parametrize("N", [2, 3, 4, 5, 8, 9])
    def test_order_matches_brute_force(self, N):
        assert psl2_order(N) == psl2_mod_order(N)
        assert len(psl2_codes(N)) == psl2_order(N)

    def test_level_indices(self):
        assert gamma0_level(2, 1).index_in_gamma == 3
        assert gamma0_level(3, 1).index_in_gamma == 4
        assert principal_level(2, 1).index_in_gamma == 6
        assert principal_level(2, 2).index_in_gamma == 24
        assert parse_level("gamma0:2^2", 2).index_in_gamma == 6

    def test_haar_weight(self):
        assert gamma0_level(2, 1).haar_weight == Fraction(1, 3)

    def test_contains(self):
        lev = gamma0_level(2, 1)
        assert lev.contains(el(1, 1, 0, 1))
        assert not lev.contains(el(0, -1, 1, 0))
        assert lev.contains(el(1, 0, 2, 1))

    def test_bad_level(self):
        with pytest.raises(ValueError):
            parse_level("gamma0:6", 2)


def _brute_gamma_sigma_index(sigma, k_extra):
    """[Gamma : Gamma ∩ sigma Gamma sigma^-1] by testing members of PSL2(Z/p^k)."""
    p = sigma.p
    N = p ** k_extra
    a, b, c, d = decode(psl2_codes(N), N)
    count = 0
    sa, sb, sc, sd = sigma.entries
    det = sigma.det
    for g in zip(a, b, c, d):
        # sigma^-1 g sigma integral  <=>  adj(sigma) g sigma == 0 mod det
        ga, gb, gc, gd = (int(v) for v in g)
        m = np.array([[sd, -sb], [-sc, sa]]) @ np.array([[ga, gb], [gc, gd]]) @ np.array([[sa, sb], [sc, sd]])
        if np.all(m % det == 0):
            count += 1
    return psl2_order(N) // count


@pytest.mark.parametrize("p", [2, 3, 5])
def test_gamma_sigma_index_p_plus_one(p):
    sigma = el(1, 0, 0, p, p)
    sub = gamma_sigma(gamma_level(p), sigma)
    assert sub.index_in_gamma == p + 1
    assert _brute_gamma_sigma_index(sigma, 1) == p + 1


@pytest.mark.parametrize("p", [2, 3])
def test_gamma_sigma_index_p_squared(p):
    sigma = el(1, 0, 0, p * p, p)
    assert gamma_sigma(gamma_level(p), sigma).index_in_gamma == p * (p + 1)
    assert gamma_sigma(gamma_level(p), inv(sigma)).index_in_gamma == p * (p + 1)


entries = st.integers(-6, 6)


@settings(max_examples=80, deadline=None)
@given(entries, entries, entries, entries, st.integers(1, 3))
def test_normalize_scalar_invariance(a, b, c, d, e):
    det = a * d - b * c
    if det == 0:
        return
    try:
        g = normalize([[a, b], [c, d]], 2)
    except NotInGroup:
        return
    assert normalize([[a * 2 ** e, b * 2 ** e], [c * 2 ** e, d * 2 ** e]], 2) == g
    assert normalize([[-a, -b], [-c, -d]], 2) == g
    assert math.gcd(math.gcd(g.a, g.b), math.gcd(g.c, g.d)) == 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([(1, 1, 0, 1), (0, -1, 1, 0), (1, 0, 0, 2), (2, 1, 0, 1)]), min_size=3, max_size=3))
def test_associativity(words):
    a, b, c = (el(*w) for w in words)
    assert mul(mul(a, b), c) == mul(a, mul(b, c))
