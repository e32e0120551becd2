import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad_vec
from scipy.linalg import expm

from swinv.numerics import (
    augmented_exponential,
    is_positive_definite,
    matrix_exponential,
    min_eigenvalue,
    symmetrize,
)
from swinv.system import Mode, spectral_abscissa


class TestMatrixExponential:
    @pytest.mark.parametrize("t", [0.0, 1.0, -3.5, 100.0])
    def test_zero_matrix(self, t):
        np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3)), t), np.eye(3))

    def test_diagonal(self):
        E = matrix_exponential(np.diag([-1.0, -2.0]), 1.0)
        np.testing.assert_allclose(E, np.diag([np.exp(-1.0), np.exp(-2.0)]), rtol=1e-14)

    @pytest.mark.parametrize("tau", [0.3, 2.76, 17.0])
    def test_nilpotent(self, tau):
        E = matrix_exponential(np.array([[0.0, 1.0], [0.0, 0.0]]), tau)
        np.testing.assert_allclose(E, [[1.0, tau], [0.0, 1.0]], rtol=1e-14, atol=1e-14)

    def test_matches_reference_implementation(self, rng):
        for _ in range(50):
            A = rng.standard_normal((4, 4)) * rng.uniform(0.01, 5)
            t = rng.uniform(-2, 2)
            ref = expm(A * t)
            assert np.linalg.norm(matrix_exponential(A, t) - ref) <= 1e-12 * np.linalg.norm(ref) * 10

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            matrix_exponential(np.array([[np.inf]]), 1.0)
        with pytest.raises(ValueError):
            matrix_exponential(np.eye(2), np.nan)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_semigroup(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((4, 4))
        A *= rng.uniform(0, 10) / np.linalg.norm(A, 2)
        s, t = rng.uniform(0, 1, 2)
        lhs = matrix_exponential(A, s + t)
        rhs = matrix_exponential(A, s) @ matrix_exponential(A, t)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(lhs)


class TestAugmentedExponential:
    def test_zero_time(self):
        mode = Mode(np.array([[0.0, 1.0], [-10.0, -1.0]]), np.array([-1.0, -1.0]))
        np.testing.assert_array_equal(augmented_exponential(mode, 0.0), np.eye(3))

    def test_scalar_limit(self):
        E = augmented_exponential(Mode(np.array([[-1.0]]), np.array([1.0])), 50.0)
        assert E[0, 1] == pytest.approx(1.0 - np.exp(-50.0), abs=1e-14)

    def test_structure(self, rng):
        for _ in range(10):
            mode = Mode(rng.standard_normal((3, 3)), rng.standard_normal(3))
            t = rng.uniform(0, 3)
            E = augmented_exponential(mode, t)
            np.testing.assert_array_equal(E[3], [0.0, 0.0, 0.0, 1.0])
            np.testing.assert_allclose(E[:3, :3], matrix_exponential(mode.A, t), rtol=1e-12, atol=1e-14)

    def test_blocks_against_quadrature(self, rng):
        for _ in range(10):
            A = rng.standard_normal((2, 2)) - np.eye(2)
            b = rng.standard_normal(2)
            t = rng.uniform(0.1, 4.0)
            E = augmented_exponential(Mode(A, b), t)
            np.testing.assert_allclose(E[:2, :2], matrix_exponential(A, t), rtol=1e-12, atol=1e-14)
            integral, _ = quad_vec(lambda s: matrix_exponential(A, t - s) @ b, 0.0, t, epsabs=1e-12, epsrel=1e-12)
            np.testing.assert_allclose(E[:2, 2], integral, atol=1e-8)

    def test_limit_is_equilibrium(self, oscillator):
        for mode in oscillator.modes:
            t = 100.0 / abs(spectral_abscissa(mode.A))
            E = augmented_exponential(mode, t)
            np.testing.assert_allclose(E[:2, 2], -np.linalg.solve(mode.A, mode.b), atol=1e-9)


class TestPositiveDefinite:
    def test_identity(self):
        assert is_positive_definite(np.eye(3), 0.0)

    def test_tiny_negative(self):
        assert not is_positive_definite(np.diag([1.0, -1e-8]), 0.0)

    def test_reference_ellipsoid_shape(self):
        assert is_positive_definite(np.array([[0.7120, -0.2021], [-0.2021, 0.7120]]), 0.0)

    def test_default_margin_rejects_boundary(self):
        assert not is_positive_definite(np.diag([1.0, 0.0]))

    def test_symmetrizes_input(self):
        S = np.array([[2.0, 1.0], [0.0, 2.0]])
        assert min_eigenvalue(S) == pytest.approx(1.5)
        np.testing.assert_array_equal(symmetrize(S), [[2.0, 0.5], [0.5, 2.0]])
