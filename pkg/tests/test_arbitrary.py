import numpy as np
import pytest

from swinv import arbitrary
from swinv.errors import InfeasibleError
from swinv.simulator import random_dwell_signal, verify_invariance
from swinv.system import SwitchedAffineSystem


def stable_node():
    return SwitchedAffineSystem.from_matrices([-np.eye(2)], [np.zeros(2)])


class TestEllipsoidInvariant:
    def test_single_stable_node_collapses_to_origin(self):
        cert = arbitrary.ellipsoid_invariant(stable_node(), 0.5)
        np.testing.assert_allclose(cert.c, 0.0, atol=1e-5)
        assert np.trace(cert.S) < 1e-3

    def test_shear_shape(self, k_q):
        np.testing.assert_allclose(k_q.S, [[0.7120, -0.2021], [-0.2021, 0.7120]], atol=2e-3)
        assert np.linalg.eigvalsh(k_q.S).min() > 0

    def test_decay_above_spectral_bound_is_infeasible(self, shear):
        with pytest.raises(InfeasibleError):
            arbitrary.ellipsoid_invariant(shear, 10.0)

    def test_default_kappa(self, shear):
        cert = arbitrary.ellipsoid_invariant(shear)
        assert 0.4 < cert.kappa < 0.4785 * 1.05

    def test_round_trip_dict(self, k_q):
        again = arbitrary.EllipsoidCertificate.from_dict(k_q.to_dict())
        np.testing.assert_array_equal(again.S, k_q.S)
        np.testing.assert_array_equal(again.c, k_q.c)


class TestMaxQuadraticDecay:
    def test_identity(self):
        assert arbitrary.max_quadratic_decay(stable_node()) == pytest.approx(1.0, abs=2e-4)

    def test_shear_lower_bound(self, shear):
        assert arbitrary.max_quadratic_decay(shear) >= 0.4785

    def test_skew_mode_has_no_decay(self):
        skew = SwitchedAffineSystem.from_matrices([[[0.0, 1.0], [-1.0, 0.0]]], [[0.0, 0.0]])
        with pytest.raises(InfeasibleError):
            arbitrary.max_quadratic_decay(skew)


class TestTheoreticRadius:
    def test_zero_when_center_is_common_equilibrium(self):
        A = [[[-1.0, 0.5], [0.0, -2.0]], [[-2.0, 0.0], [0.3, -1.0]]]
        c = np.array([1.0, -2.0])
        system = SwitchedAffineSystem.from_matrices(A, [-np.asarray(a) @ c for a in A])
        assert arbitrary.theoretic_radius(system, np.eye(2), c, 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_single_mode_unit_offset(self):
        system = SwitchedAffineSystem.from_matrices([-np.eye(2)], [[1.0, 0.0]])
        assert arbitrary.theoretic_radius(system, np.eye(2), np.zeros(2), 1.0) == pytest.approx(1.0)

    def test_rejects_uncertified_rate(self, k_q, shear):
        with pytest.raises(ValueError):
            arbitrary.theoretic_radius(shear, k_q.S, k_q.c, 5.0)

    def test_shear_ball_matches_ellipsoid(self, shear, k_q, rng):
        R = arbitrary.theoretic_radius(shear, k_q.S, k_q.c, k_q.kappa)
        assert R <= 1.0 + 1e-6
        ball = k_q.ellipsoid.scaled(R)
        pts = ball.interior_points(500, rng)
        assert k_q.ellipsoid.contains(pts, 1e-9).all()


class TestSosInvariant:
    def test_single_stable_node_is_tiny(self):
        cert = arbitrary.sos_invariant(stable_node(), 4, 1.0, 1e-2)
        assert cert.r < 1e-4

    def test_lie_derivative_negative_on_boundary(self, shear, k_q, k_sos, rng):
        pts = k_sos.boundary_points(1000, k_q.c, rng)
        np.testing.assert_allclose(k_sos.V(pts), k_sos.r, rtol=1e-6)
        grads = k_sos.V.gradient(pts)
        lie = np.array([np.einsum("ij,ij->i", grads, pts @ m.A.T + m.b) for m in shear.modes])
        assert lie.max() < 0

    def test_gram_certificate(self, shear, k_sos):
        assert k_sos.reconstruction_error(shear) <= 1e-7
        for lam in k_sos.gram_min_eigenvalues():
            assert lam >= -1e-7

    def test_round_trip_dict(self, k_sos, rng):
        again = arbitrary.SosCertificate.from_dict(k_sos.to_dict())
        x = rng.uniform(-1, 0.5, (20, 2))
        np.testing.assert_allclose(again.V(x), k_sos.V(x), rtol=1e-12)
        assert again.r == k_sos.r


class TestBetaSearch:
    def test_singleton_grid(self, shear):
        res = arbitrary.sos_beta_search(shear, 4, 1e-2, [1.0])
        assert res.beta == 1.0
        assert res.unimodal
        assert len(res.profile) == 1

    def test_picks_smallest_level(self, shear):
        res = arbitrary.sos_beta_search(shear, 4, 1e-2, [2.0, 0.5, 1.0])
        feasible = [r for _, r, _ in res.profile if r is not None]
        assert res.r == min(feasible)
        assert [b for b, _, _ in res.profile] == [0.5, 1.0, 2.0]

    def test_empty_grid(self, shear):
        with pytest.raises(ValueError):
            arbitrary.sos_beta_search(shear, 4, 1e-2, [])


class TestHomogeneousDecay:
    def test_degree_twelve(self, shear, k_sos):
        assert arbitrary.homogeneous_decay(k_sos, shear) == pytest.approx(1.0 / 12)

    def test_zero_multiplier(self, k_sos):
        cert = arbitrary.SosCertificate(k_sos.V, k_sos.r, 0.0, k_sos.eps, k_sos.degree)
        assert arbitrary.homogeneous_decay(cert) == 0.0

    def test_quadratic_certificate_recovers_rate(self, shear):
        kappa0 = 0.4
        cert = arbitrary.sos_invariant(shear, 2, 2 * kappa0, 1e-3)
        assert arbitrary.homogeneous_decay(cert, shear) == pytest.approx(kappa0)
        assert kappa0 <= arbitrary.max_quadratic_decay(shear)


class TestContainment:
    def test_filippov_points_inside_both_sets(self, shear, k_q, k_sos):
        assert arbitrary.filippov_containment(shear, lambda p: k_q.ellipsoid.contains(p, 1e-6)) == (0, 21)
        assert arbitrary.filippov_containment(shear, lambda p: k_sos.contains(p, 1e-6))[0] == 0

    def test_sos_set_inside_ellipsoid(self, k_q, k_sos, rng):
        pts = k_sos.boundary_points(1000, k_q.c, rng)
        assert k_q.ellipsoid.contains(pts, 1e-9).all()

    def test_converse_fails(self, k_q, k_sos, rng):
        # the ellipsoid is strictly larger than the polynomial set
        pts = k_q.ellipsoid.interior_points(2000, rng)
        assert not k_sos.contains(pts).all()

    def test_shrunk_ellipsoid_is_not_invariant(self, shear, k_q, rng):
        small = k_q.ellipsoid.scaled(0.5)
        start = small.boundary_points(50, rng)
        signals = [random_dwell_signal(2, 5.0, 0.0, seed=3, stream=k) for k in range(50)]
        rep = verify_invariance(lambda x, tol: small.contains(x, tol), shear, signals, start, 5.0)
        assert rep.violations > 0
        assert rep.witnesses

    def test_ellipsoid_is_invariant(self, shear, k_q, rng):
        start = k_q.ellipsoid.boundary_points(50, rng)
        signals = [random_dwell_signal(2, 5.0, 0.0, seed=4, stream=k) for k in range(50)]
        rep = verify_invariance(lambda x, tol: k_q.ellipsoid.contains(x, tol), shear, signals, start, 5.0)
        assert rep.ok


def test_level_set_grid_rows(k_sos):
    rows = arbitrary.level_set_grid(k_sos.V, np.linspace(-1, 0, 3), np.linspace(-1, 0, 4))
    assert len(rows) == 12
    assert rows[0][2] == pytest.approx(float(k_sos.V(np.array([[-1.0, -1.0]]))[0]))
