import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heckevirt.arith_core import gamma0_level, gamma_level, identity, inv, mul
from heckevirt.cosets import double_coset_set
from heckevirt.dseries_kernel import QuadratureSpec, sum_over_set, symbol_integral_over_H
from heckevirt.errors import IllConditioned, NontrivialStabilizer
from heckevirt.hecke_assembly import (ConjugacyClassSet, build_basis, character_estimate,
                                      class_ball_sum, coset_index, compress_op, eigenvalues_on_range,
                                      hecke_block_matrix, hecke_eigenvalues, hecke_trace,
                                      identity_defect, invariant_scalar_product, phi_map,
                                      projection_residual, range_basis, stabilizer_check,
                                      unitary_normalization, verify_phi_multiplicativity)

from conftest import el
from oracles import dim_cusp_forms, harish_chandra_split, tau

H = 40


class TestBasis:
    def test_single_function_normalised(self, q):
        b = build_basis(12, 1, q)
        assert abs(b.inner(b.funcs[:, 0], b.funcs[:, 0]) - 1) < 1e-12

    def test_orthonormal(self, basis24):
        assert basis24.gram_residual < 1e-8

    def test_nested(self, basis24, basis64):
        assert np.allclose(basis24.funcs, basis64.funcs[:, :24], atol=1e-10)

    def test_evaluate_matches_nodes(self, basis24):
        vals = basis24.evaluate(basis24.z[:5])
        assert np.allclose(vals, basis24.funcs[:5], atol=1e-10)

    def test_too_large(self, q):
        with pytest.raises(IllConditioned):
            build_basis(12, 10_000, q)

    def test_identity_defect_small(self, basis64):
        assert identity_defect(basis64) < 1e-6


class TestCompressedOps:
    def test_inverse_is_adjoint(self, basis24, q):
        g = el(2, 1, 1, 1)
        a = compress_op(12, g, basis24, q)
        b = compress_op(12, inv(g), basis24, q)
        assert np.linalg.norm(a.mat - b.adjoint().mat) < 1e-10

    @pytest.mark.parametrize("g", [(1, 1, 0, 1), (1, 0, 0, 2), (3, 1, 2, 1)])
    def test_contraction(self, g, basis24, q):
        op = compress_op(12, el(*g), basis24, q)
        assert np.linalg.norm(op.mat, 2) <= 1 + op.err + 1e-9

    def test_identity_trace(self, basis64, q):
        op = compress_op(12, identity(2), basis64, q)
        assert abs(op.trace - 11 / 12) <= op.err + 1e-6


@pytest.fixture(scope="module")
def gamma_ops(basis64, q):
    G = gamma_level(2)
    P = phi_map(double_coset_set(G, identity(2)), H, basis64, q)
    T2 = phi_map(double_coset_set(G, el(1, 0, 0, 2)), H, basis64, q)
    return P, T2


class TestPhi:
    def test_projection(self, gamma_ops):
        P, _ = gamma_ops
        assert abs(P.trace - dim_cusp_forms(12)) < 1e-3
        assert projection_residual(P.mat) < 1e-3
        assert np.linalg.norm(P.mat - P.mat.conj().T) < 1e-10

    def test_hecke_self_adjoint_and_commutes(self, gamma_ops):
        P, T2 = gamma_ops
        assert np.linalg.norm(T2.mat - T2.mat.conj().T) < 1e-10
        assert np.linalg.norm(P.mat @ T2.mat - T2.mat @ P.mat) < 1e-2

    def test_relation_t2_squared(self, gamma_ops, basis64, q):
        """Phi(T2)^2 = Phi(T4) + (p + 1) Phi(e) within the error budget."""
        P, T2 = gamma_ops
        T4 = phi_map(double_coset_set(gamma_level(2), el(1, 0, 0, 4)), 30, basis64, q)
        prod = T2 @ T2
        resid = np.linalg.norm(prod.mat - T4.mat - 3 * P.mat)
        assert resid <= prod.err + T4.err + 3 * P.err
        assert np.linalg.norm(T2.mat @ T4.mat - T4.mat @ T2.mat) < 1e-2

    def test_trace_matches_scalar_sum(self, gamma_ops, q):
        _, T2 = gamma_ops
        s = sum_over_set(12, double_coset_set(gamma_level(2), el(1, 0, 0, 2)), H, q)
        assert abs(T2.trace - s.value) <= T2.err + s.err

    @pytest.mark.parametrize("s1, s2", [((1, 1, 0, 1), (0, 1, -1, 0)), ((1, 0, 0, 2), (1, 1, 0, 1))])
    def test_multiplicativity(self, s1, s2, basis24, q):
        r = verify_phi_multiplicativity(el(*s1), el(*s2), 30, basis24, q)
        assert r["residual"] <= r["bound"]


class TestRange:
    def test_range_basis_exact_projection(self):
        rng = np.random.default_rng(0)
        V, _ = np.linalg.qr(rng.normal(size=(8, 3)) + 1j * rng.normal(size=(8, 3)))
        Pm = V @ V.conj().T
        W, ev = range_basis(Pm)
        assert W.shape[1] == 3 and np.allclose(ev, 1)
        A = V @ np.diag([2.0, -1.0, 0.5]) @ V.conj().T
        assert np.allclose(np.sort(eigenvalues_on_range(Pm, A).real), [-1.0, 0.5, 2.0])

    def test_range_basis_rejects_non_projection(self):
        with pytest.raises(IllConditioned):
            range_basis(np.diag([1.0, 0.5, 0.0]))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_invariant_product_positive(self, seed):
        # positivity of <P h, h> on the model of the Gamma projection
        rng = np.random.default_rng(seed)
        P = _cached_P()
        h = rng.normal(size=P.shape[0]) + 1j * rng.normal(size=P.shape[0])
        val = np.vdot(h, P @ h)
        assert val.real >= -1e-3 * np.vdot(h, h).real
        assert abs(val.imag) < 1e-8 * np.vdot(h, h).real


_P = {}


def _cached_P():
    if "P" not in _P:
        q = QuadratureSpec()
        b = build_basis(12, 24, q)
        _P["P"] = phi_map(double_coset_set(gamma_level(2), identity(2)), 30, b, q).mat
    return _P["P"]


def test_invariant_scalar_product_consistent(basis24, q):
    lev = gamma_level(2)
    h = np.zeros(24, complex)
    h[0] = 1
    tv = invariant_scalar_product(h, h, lev, 30, basis24, q)
    assert tv.value.real > 0 and abs(tv.value.imag) < 1e-10


class TestEigenvalues:
    @pytest.mark.parametrize("sigma, want", [
        (el(1, 0, 0, 2), tau(2) * 2 ** -5.5),
        (el(1, 0, 0, 4), (tau(4) - 2 ** 10) * 2 ** -11.0),
    ])
    def test_level_one(self, sigma, want, basis64, q):
        r = hecke_eigenvalues(gamma_level(2), sigma, 30, basis64, q)
        assert r["rank"] == 1
        assert abs(r["eigenvalues"][0] - want) < 1e-4

    def test_normalisation_relation(self):
        # with unitary normalisation t_p^2 = t_{p^2} + 1 + 1/p
        t1 = tau(2) * 2 ** -5.5
        t2 = (tau(4) - 2 ** 10) * 2 ** -11.0
        assert abs(t1 ** 2 - (t2 + 1 + 1 / 2)) < 1e-12
        assert unitary_normalization(el(1, 0, 0, 4)) == 0.5

    def test_gamma0_block_trace(self, q):
        lev = gamma0_level(2, 1)
        tv = hecke_trace(12, lev, identity(2), 60, q)
        assert abs(tv.value - dim_cusp_forms(12, 2)) < 1e-5
        t2 = hecke_trace(12, lev, el(1, 0, 0, 2), 60, q)
        assert abs(t2.value - tau(2) * 2 ** -5.5) < 1e-5

    def test_block_matrix_self_adjoint(self, basis24, q):
        M = hecke_block_matrix(gamma0_level(2, 1), identity(2), 20, basis24, q).full()
        assert np.linalg.norm(M - M.conj().T) < 1e-8 * np.linalg.norm(M)

    def test_coset_index(self):
        assert coset_index(gamma_level(2), el(1, 0, 0, 2)) == 3
        assert coset_index(gamma_level(3), el(1, 0, 0, 9, 3)) == 12


class TestCharacter:
    def test_class_enumeration(self):
        s = el(2, 0, 0, 1)
        mats, _ = ConjugacyClassSet(s).enumerate(12)
        for row in mats.tolist():
            # every member has the trace and determinant of sigma
            assert row[0] + row[3] in (3, -3) and row[0] * row[3] - row[1] * row[2] == 2
        assert tuple(s.entries) in {tuple(r) for r in mats.tolist()}

    def test_class_against_brute_conjugation(self):
        s = el(2, 0, 0, 1)
        got = {tuple(r) for r in ConjugacyClassSet(s).enumerate(10)[0].tolist()}
        from heckevirt.cosets import enumerate_det
        brute = set()
        for g in enumerate_det(1, 12).tolist():
            c = mul(mul(el(*g), s), inv(el(*g)))
            if max(abs(v) for v in c.entries) <= 10:
                brute.add(c.entries)
        assert brute <= got

    def test_stabilizer(self):
        assert stabilizer_check(el(2, 0, 0, 1))
        with pytest.raises(NontrivialStabilizer):
            stabilizer_check(el(1, 2, 0, 1))

    def test_ball_sum_tends_to_symbol(self, q):
        s = el(2, 0, 0, 1)
        ball = class_ball_sum(12, s, 100, q)
        sym = symbol_integral_over_H(12, s, q)
        assert abs(sym.value - harish_chandra_split(12, 2)) < 1e-9
        assert abs(ball.value - sym.value) < 1e-6

    def test_levels(self, q):
        est = character_estimate(el(2, 0, 0, 1), 4, 12, 60, q, sum_k_max=3)
        assert est.prefactors == (2, 2, 2, 2)
        assert est.class_multiplicities == (1, 1, 2, 4)
        # from k = 3 on the level sum is the class multiplicity times the ball sum
        assert abs(est.double_sums[2].value - 2 * est.ball_sum.value) < 1e-6

    def test_rejects_unipotent(self, q):
        # the stabilizer check runs first and catches the translation subgroup
        with pytest.raises(NontrivialStabilizer):
            character_estimate(el(1, 1, 0, 1), 2, 12, 20, q)
