import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gopsa.exceptions import InvalidInput, NotPositiveDefinite, NumericalOverflow
from gopsa.spd import (
    as_spd, as_sym, matrix_exp, matrix_invsqrt, matrix_log, matrix_power, matrix_sqrt, shrink,
    sym_eig,
)

from conftest import random_spd, random_sym

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 8)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestValidation:
    def test_last_bit_asymmetry_is_removed(self):
        M = np.array([[2.0, 1.0], [1.0 + 1e-15, 3.0]])
        S = as_sym(M)
        assert S[0, 1] == S[1, 0]

    def test_large_asymmetry_rejected(self):
        with pytest.raises(InvalidInput):
            as_sym(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInput):
            sym_eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(InvalidInput):
            as_sym(np.ones((2, 3)))

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            as_spd(np.diag([1.0, -1.0]))

    def test_eps_pd_is_relative(self):
        with pytest.raises(NotPositiveDefinite):
            as_spd(np.diag([1.0, 1e-13]))
        as_spd(np.diag([1.0, 1e-11]))


class TestSymEig:
    def test_diagonal(self):
        w, U = sym_eig(np.diag([2.0, 3.0]))
        np.testing.assert_allclose(w, [2.0, 3.0])
        np.testing.assert_allclose(np.abs(U), np.eye(2), atol=1e-15)

    def test_identity(self):
        w, _ = sym_eig(np.eye(3))
        np.testing.assert_allclose(w, [1.0, 1.0, 1.0])

    def test_rotated(self):
        t = np.pi / 6
        Q = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        w, _ = sym_eig(Q @ np.diag([1.0, 4.0]) @ Q.T)
        np.testing.assert_allclose(w, [1.0, 4.0], rtol=1e-14)

    @given(seeds, dims)
    def test_invariants(self, seed, d):
        M = random_sym(np.random.default_rng(seed), d)
        w, U = sym_eig(M)
        assert np.all(np.diff(w) >= 0)
        assert np.linalg.norm(U.T @ U - np.eye(d)) <= 1e-10
        assert np.linalg.norm((U * w) @ U.T - M) <= 1e-10 * max(np.linalg.norm(M), 1.0)


class TestMatrixLog:
    def test_identity(self):
        np.testing.assert_array_equal(matrix_log(np.eye(3)), np.zeros((3, 3)))

    def test_diagonal(self):
        np.testing.assert_allclose(matrix_log(np.diag([np.e, np.e ** 2])), np.diag([1.0, 2.0]),
                                   atol=1e-15)

    def test_not_spd(self):
        with pytest.raises(NotPositiveDefinite):
            matrix_log(np.diag([1.0, 0.0]))

    def test_stack(self, rng):
        S = np.stack([random_spd(rng, 3) for _ in range(4)])
        L = matrix_log(S)
        for i in range(4):
            np.testing.assert_allclose(L[i], matrix_log(S[i]), atol=1e-14)

    @given(seeds, dims)
    def test_exp_log_round_trip(self, seed, d):
        S = random_spd(np.random.default_rng(seed), d, cond=1e4)
        assert rel(matrix_exp(matrix_log(S)), S) <= 1e-9


class TestMatrixExp:
    def test_zero(self):
        np.testing.assert_array_equal(matrix_exp(np.zeros((2, 2))), np.eye(2))

    def test_diagonal(self):
        np.testing.assert_allclose(matrix_exp(np.diag([1.0, 2.0])),
                                   np.diag([np.e, np.e ** 2]), rtol=1e-15)

    def test_commuting_product(self):
        A, B = np.diag([0.3, -1.2, 2.0]), np.diag([1.1, 0.4, -0.7])
        np.testing.assert_allclose(matrix_exp(A + B), matrix_exp(A) @ matrix_exp(B), rtol=1e-14)

    def test_overflow(self):
        with pytest.raises(NumericalOverflow):
            matrix_exp(np.diag([1.0, 1000.0]))

    @given(seeds, dims)
    def test_log_exp_round_trip(self, seed, d):
        T = random_sym(np.random.default_rng(seed), d)
        assert np.linalg.norm(matrix_log(matrix_exp(T)) - T) <= 1e-9 * max(np.linalg.norm(T), 1)


class TestMatrixPower:
    def test_sqrt_diagonal(self):
        np.testing.assert_allclose(matrix_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]))
        np.testing.assert_allclose(matrix_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
        np.testing.assert_allclose(matrix_invsqrt(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]))

    def test_zero_power_is_identity(self, rng):
        np.testing.assert_array_equal(matrix_power(random_spd(rng, 4), 0.0), np.eye(4))

    def test_unit_power(self, rng):
        S = random_spd(rng, 4)
        assert rel(matrix_power(S, 1.0), S) <= 1e-12

    @given(seeds, dims)
    def test_inverse(self, seed, d):
        S = random_spd(np.random.default_rng(seed), d, cond=1e3)
        assert rel(matrix_power(S, -1.0), np.linalg.inv(S)) <= 1e-9

    @given(seeds, dims, st.floats(-2, 2), st.floats(-2, 2))
    def test_semigroup(self, seed, d, a, b):
        S = random_spd(np.random.default_rng(seed), d)
        assert rel(matrix_power(S, a) @ matrix_power(S, b), matrix_power(S, a + b)) <= 1e-9


class TestShrink:
    def test_zero_matrix_fallback(self):
        np.testing.assert_allclose(shrink(np.zeros((2, 2)), 1e-5), 1e-5 * np.eye(2))

    def test_rank_one(self):
        v = np.array([1.0, 1.0]) / np.sqrt(2)
        w = np.linalg.eigvalsh(shrink(np.outer(v, v), 1e-5))
        np.testing.assert_allclose(w, [5e-6, 1 + 5e-6], rtol=1e-10)

    def test_rho_must_be_positive(self):
        with pytest.raises(InvalidInput):
            shrink(np.eye(2), 0.0)

    @given(seeds, dims, st.floats(1e-8, 1.0))
    def test_floor_and_order(self, seed, d, rho):
        S = random_spd(np.random.default_rng(seed), d)
        out = shrink(S, rho)
        w0, w1 = np.linalg.eigvalsh(S), np.linalg.eigvalsh(out)
        assert w1[0] >= rho * np.trace(S) / d - 1e-12
        np.testing.assert_allclose(w1 - w0, rho * np.trace(S) / d, atol=1e-9)
