import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heckevirt.arith_core import (gamma0_level, gamma_level, identity, inv, mul, principal_level)
from heckevirt.cosets import (HeckeElement, block_set, classify, coset_identity_check,
                              degree, double_coset_decomp, double_coset_set, enumerate_det, heights,
                              hecke_product, hnf, hnf_reps, regular_rep_matrix, right_coset,
                              right_coset_reps, trace_set, two_sided)
from heckevirt.errors import BudgetExceeded, NegativeDeterminant

from conftest import el
from oracles import hermite_list


def brute_det(delta, H):
    out = set()
    r = range(-H, H + 1)
    for a in r:
        for b in r:
            for c in r:
                for d in r:
                    if a * d - b * c == delta and np.gcd.reduce([a, b, c, d]) == 1:
                        t = (a, b, c, d)
                        lead = next(v for v in t if v)
                        out.add(t if lead > 0 else tuple(-v for v in t))
    return out


@pytest.mark.parametrize("delta, H", [(1, 4), (2, 4), (-2, 3), (4, 3)])
def test_enumerate_det_matches_brute_force(delta, H):
    got = {tuple(r) for r in enumerate_det(delta, H).tolist()}
    assert got == brute_det(delta, H)


def test_enumerate_sorted_by_height():
    h = heights(enumerate_det(2, 20))
    assert np.all(np.diff(h) >= 0)


@pytest.mark.parametrize("m, p", [(1, 2), (2, 2), (3, 2), (1, 3), (2, 3), (1, 5)])
def test_hnf_reps_and_degree(m, p):
    reps = {g.entries for g in hnf_reps(m, p)}
    assert reps == set(hermite_list(m, p))
    assert degree(m, p) == len(reps) == p ** (m - 1) * (p + 1)


def test_hnf_invariant_under_left_gamma():
    g = el(3, 1, 1, 1)
    for gam in [el(1, 1, 0, 1), el(0, -1, 1, 0), el(2, 1, 1, 1)]:
        assert hnf(mul(gam, g)) == hnf(g)


def test_classify():
    assert classify(el(1, 0, 0, 4)) == 2
    assert classify(el(3, 1, 1, 1)) == 1
    with pytest.raises(NegativeDeterminant):
        classify(el(0, 1, 2, 0))


def test_double_coset_decomp():
    dc = double_coset_decomp(el(1, 0, 0, 2))
    assert dc.m == 1 and len(dc.right_reps) == 3


class TestHeckeAlgebra:
    @pytest.mark.parametrize("p", [2, 3])
    def test_tp_squared(self, p):
        T = lambda m: HeckeElement.T(m, p)
        assert hecke_product(T(1), T(1)).as_dict() == (T(2) + (p + 1) * T(0)).as_dict()

    @pytest.mark.parametrize("p", [2, 3])
    def test_tp_tp2(self, p):
        T = lambda m: HeckeElement.T(m, p)
        assert hecke_product(T(1), T(2)).as_dict() == (T(3) + p * T(1)).as_dict()

    def test_unit(self):
        T = lambda m: HeckeElement.T(m, 2)
        assert hecke_product(T(0), T(1)).as_dict() == {1: 1}

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 2))
    def test_commutative_associative(self, a, b, c):
        T = lambda m: HeckeElement.T(m, 2)
        assert hecke_product(T(a), T(b)).as_dict() == hecke_product(T(b), T(a)).as_dict()
        left = hecke_product(hecke_product(T(a), T(b)), T(c))
        right = hecke_product(T(a), hecke_product(T(b), T(c)))
        assert left.as_dict() == right.as_dict()

    def test_degree_is_multiplicative(self):
        from heckevirt.cosets import hecke_degree
        T = lambda m: HeckeElement.T(m, 3)
        for a, b in [(1, 1), (1, 2), (2, 2)]:
            assert hecke_degree(hecke_product(T(a), T(b))) == hecke_degree(T(a)) * hecke_degree(T(b))


@pytest.mark.parametrize("p", [2, 3])
def test_regular_rep_interior_relations(p):
    T = lambda m: HeckeElement.T(m, p)
    R = {m: regular_rep_matrix(T(m), 3) for m in range(4)}
    inter = np.nonzero(R[1].interior)[0]
    lhs = (R[1].matrix @ R[1].matrix).toarray()[inter]
    rhs = (R[2].matrix + (p + 1) * R[0].matrix).toarray()[inter]
    assert np.array_equal(lhs, rhs)
    inter3 = np.nonzero(regular_rep_matrix(hecke_product(T(1), T(2)), 3).interior)[0]
    lhs = (R[1].matrix @ R[2].matrix).toarray()[inter3]
    rhs = (R[3].matrix + p * R[1].matrix).toarray()[inter3]
    assert np.array_equal(lhs, rhs)


class TestTransversals:
    def test_gamma0_2(self):
        reps = right_coset_reps(gamma0_level(2, 1)).reps
        assert len(reps) == 3
        lev = gamma0_level(2, 1)
        # distinct right cosets: r_i r_j^-1 outside the level for i != j
        for i, a in enumerate(reps):
            for j, b in enumerate(reps):
                assert lev.contains(mul(a, inv(b))) == (i == j)

    @pytest.mark.parametrize("k, index", [(1, 6), (2, 24), (3, 192)])
    def test_principal(self, k, index):
        assert len(right_coset_reps(principal_level(2, k)).reps) == index


class TestCosetSets:
    def test_double_coset_members_are_all_det_p(self):
        mats, mult = double_coset_set(gamma_level(2), el(1, 0, 0, 2)).enumerate(12)
        assert set(mult.tolist()) == {1}
        assert {tuple(r) for r in mats.tolist()} == {tuple(r) for r in enumerate_det(2, 12).tolist()}

    def test_right_coset_multiplicity_brute(self):
        lev = gamma0_level(2, 1)
        g = el(1, 0, 0, 2)
        cs = right_coset(lev, g)
        mats, _ = cs.enumerate(8)
        got = {tuple(r) for r in mats.tolist()}
        want = set()
        for r in enumerate_det(2, 8).tolist():
            x = el(*r)
            if lev.contains(mul(x, inv(g))):
                want.add(tuple(r))
        assert got == want

    def test_trace_set_at_gamma_is_double_coset(self):
        s = el(1, 0, 0, 2)
        a, ma = trace_set(gamma_level(2), s).enumerate(10)
        b, mb = double_coset_set(gamma_level(2), s).enumerate(10)
        assert np.array_equal(a, b) and np.array_equal(ma, mb)

    def test_block_diagonal_sum_is_trace_set(self):
        lev, s = gamma0_level(2, 1), el(1, 0, 0, 2)
        from collections import Counter
        cnt = Counter()
        for i in range(3):
            m, w = block_set(lev, s, i, i).enumerate(8)
            for r, k in zip(m.tolist(), w.tolist()):
                cnt[tuple(r)] += k
        m, w = trace_set(lev, s).enumerate(8)
        assert cnt == Counter({tuple(r): k for r, k in zip(m.tolist(), w.tolist())})

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            double_coset_set(gamma_level(2), identity(2)).enumerate(200, max_candidates=10)

    def test_two_sided(self):
        s1, s2 = el(1, 0, 0, 2), el(2, 0, 0, 1)
        mats, _ = two_sided(gamma_level(2), s1, s2).enumerate(6)
        assert all(a * d - b * c in (1, 4) for a, b, c, d in mats.tolist())


@pytest.mark.parametrize("sigma", [(1, 0, 0, 2), (1, 0, 0, 4), (1, 1, 0, 2)])
def test_coset_identity(sigma):
    rep = coset_identity_check(el(*sigma), ball_height=8)
    assert rep.ok
    assert rep.degree == degree(classify(el(*sigma)), 2)
