import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swinv.numerics import augmented_exponential
from swinv.sets import EllipsoidSet, SublevelSet
from swinv.simulator import (
    cycle_signal,
    cycle_spectral_radius,
    decay_estimate,
    decay_fit,
    flow,
    nagumo_check,
    random_dwell_signal,
    reachable_sample,
    rk4_flow,
    simulate,
    verify_invariance,
    verify_ugub,
)
from swinv.system import Mode, SwitchedAffineSystem, SwitchingSignal, spectral_abscissa


def random_system(rng, modes=2, scale=3.0):
    A = rng.standard_normal((modes, 2, 2))
    A *= scale / np.linalg.norm(A, 2, axis=(1, 2))[:, None, None]
    return SwitchedAffineSystem.from_matrices(list(A), list(rng.standard_normal((modes, 2))))


class TestFlow:
    def test_time_zero(self, shear):
        x0 = np.array([0.3, -2.0])
        sig = random_dwell_signal(2, 10.0, 0.0, seed=1)
        np.testing.assert_array_equal(flow(shear, sig, x0, 0.0), x0)

    def test_constant_signal_reaches_equilibrium(self, oscillator):
        for i, mode in enumerate(oscillator.modes):
            t = 100.0 / abs(spectral_abscissa(mode.A))
            x = flow(oscillator, SwitchingSignal.constant(i), np.array([5.0, -3.0]), t)
            np.testing.assert_allclose(x, oscillator.equilibria()[i], atol=1e-6)

    def test_closed_form_single_mode(self, rng):
        A = np.array([[-1.0, 2.0], [-2.0, -1.0]])
        b = np.array([1.0, 0.5])
        system = SwitchedAffineSystem.from_matrices([A], [b])
        xe = system.equilibria()[0]
        x0 = rng.standard_normal(2)
        from scipy.linalg import expm
        want = expm(A * 1.7) @ (x0 - xe) + xe
        np.testing.assert_allclose(flow(system, SwitchingSignal.constant(0), x0, 1.7), want, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(min_value=0.0, max_value=1.0))
    def test_convex_combination_identity(self, seed, lam):
        rng = np.random.default_rng(seed)
        system = random_system(rng)
        sig = random_dwell_signal(2, 3.0, 0.0, seed=seed)
        x, y = rng.standard_normal((2, 2))
        lhs = flow(system, sig, lam * x + (1 - lam) * y, 3.0)
        rhs = lam * flow(system, sig, x, 3.0) + (1 - lam) * flow(system, sig, y, 3.0)
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * (1 + np.linalg.norm(lhs))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_concatenation(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng)
        sig = random_dwell_signal(2, 6.0, 0.3, seed=seed)
        t1, t2 = rng.uniform(0, 3, 2)
        x0 = rng.standard_normal(2)
        whole = flow(system, sig, x0, t1 + t2)
        split = flow(system, sig.shifted(t1), flow(system, sig, x0, t1), t2)
        assert np.linalg.norm(whole - split) <= 1e-9 * (1 + np.linalg.norm(whole))

    def test_rk4_agreement(self, rng):
        system = random_system(rng, scale=2.0)
        sig = random_dwell_signal(2, 1.0, 0.2, seed=5)
        x0 = rng.standard_normal(2)
        exact = flow(system, sig, x0, 1.0)
        np.testing.assert_allclose(rk4_flow(system, sig, x0, 1.0, dt=1e-3), exact, rtol=1e-8, atol=1e-9)

    def test_rejects_negative_time(self, shear):
        with pytest.raises(ValueError):
            flow(shear, SwitchingSignal.constant(0), np.zeros(2), -1.0)


class TestTrajectory:
    def test_samples_follow_exact_steps(self, oscillator):
        sig = random_dwell_signal(2, 30.0, 3.0, seed=9)
        traj = simulate(oscillator, sig, np.array([4.0, -2.0]), 30.0, dt=0.07)
        for k in range(traj.times.size - 1):
            h = traj.times[k + 1] - traj.times[k]
            mode = traj.modes[k]
            F = augmented_exponential(oscillator[mode], h)
            step = F[:2, :2] @ traj.states[k] + F[:2, 2]
            assert np.linalg.norm(step - traj.states[k + 1]) <= 1e-9 * (1 + np.linalg.norm(step))

    def test_switching_instants_are_sampled(self, oscillator):
        sig = random_dwell_signal(2, 30.0, 3.0, seed=9)
        traj = simulate(oscillator, sig, np.zeros(2), 30.0, dt=0.07)
        np.testing.assert_allclose(traj.times[traj.switch_index], sig.switch_times(30.0))
        for s, t in zip(traj.switch_index, sig.switch_times(30.0)):
            assert traj.modes[s] == sig.mode_at(t)

    def test_rows_are_one_based(self, shear):
        traj = simulate(shear, SwitchingSignal.constant(1), np.zeros(2), 0.1, dt=0.05)
        assert traj.header() == ["t", "x1", "x2", "mode"]
        assert all(r[-1] == 2 for r in traj.rows())


class TestRandomSignal:
    def test_single_mode_is_constant(self):
        sig = random_dwell_signal(1, 100.0, 0.5, seed=0)
        assert sig.values == (0,)

    def test_dwell_bounds_switch_count(self):
        for seed in range(50):
            sig = random_dwell_signal(3, 20.0, 5.0, seed=seed)
            assert len(sig.switch_times(20.0)) <= 4
            assert np.all(np.diff(sig.breakpoints) >= 5.0)

    def test_deterministic(self):
        a = random_dwell_signal(3, 50.0, 0.5, seed=42, stream=7)
        b = random_dwell_signal(3, 50.0, 0.5, seed=42, stream=7)
        c = random_dwell_signal(3, 50.0, 0.5, seed=42, stream=8)
        assert a == b
        assert a != c

    def test_no_repeated_modes(self):
        sig = random_dwell_signal(4, 200.0, 0.0, seed=3)
        assert all(u != v for u, v in zip(sig.values, sig.values[1:]))


class TestReachable:
    def test_time_zero_is_origin(self, shear):
        np.testing.assert_array_equal(reachable_sample(shear, 0.0, 10), 0.0)

    def test_long_horizon_inside_sos_set(self, shear, k_sos):
        pts = reachable_sample(shear, 30.0, 10_000, seed=2)
        assert k_sos.contains(pts, 1e-6).all()

    def test_nested_samples_diagnostic(self, shear, k_q):
        # inner approximation of K(t) grows with t; both stay in K_Q
        early = reachable_sample(shear, 5.0, 500, seed=6)
        late = reachable_sample(shear, 10.0, 500, seed=6)
        assert k_q.ellipsoid.contains(early, 1e-9).all()
        assert k_q.ellipsoid.contains(late, 1e-9).all()


class TestVerifyInvariance:
    def test_empty_ensemble(self, shear, k_q):
        rep = verify_invariance(lambda x, tol: k_q.ellipsoid.contains(x, tol), shear, [], np.zeros((0, 2)), 10.0)
        assert rep.ok
        assert (rep.tested, rep.samples, rep.violations) == (0, 0, 0)

    def test_witnesses_sorted_and_excursion(self, shear, k_q, rng):
        small = k_q.ellipsoid.scaled(0.5)
        start = small.boundary_points(30, rng)
        signals = [random_dwell_signal(2, 5.0, 0.0, seed=8, stream=k) for k in range(30)]
        rep = verify_invariance(lambda x, tol: small.contains(x, tol), shear, signals, start, 5.0,
                                distance=small.distance)
        keys = [(w.trajectory, w.time) for w in rep.witnesses]
        assert keys == sorted(keys)
        assert rep.max_excursion > 0
        assert rep.to_dict()["violations"] == rep.violations

    def test_needs_one_start_per_signal(self, shear):
        with pytest.raises(ValueError):
            verify_invariance(lambda x, tol: np.ones(len(x), bool), shear,
                              [SwitchingSignal.constant(0)], np.zeros((2, 2)), 1.0)


class TestUgub:
    def test_constant_signal_from_safety_set(self, oscillator, dwell_certs):
        cert = dwell_certs[5.0]
        x0 = np.stack([cert.safety_sets()[i].boundary_points(4)[1] for i in range(2)])
        signals = [SwitchingSignal.constant(0), SwitchingSignal.constant(1)]
        rep = verify_ugub(oscillator, cert, signals, x0, 30.0)
        assert [r.entry_time for r in rep.records] == [0.0, 0.0]
        assert rep.exits == 0
        assert rep.ok

    def test_far_start_enters_later(self, oscillator, dwell_certs):
        cert = dwell_certs[5.0]
        sig = random_dwell_signal(2, 100.0, 5.0, seed=1)
        rep = verify_ugub(oscillator, cert, [sig], np.array([[1e3, -1e3]]), 100.0)
        assert rep.records[0].entry_time > 0
        assert rep.ok

    def test_destabilizing_cycle_below_threshold(self, oscillator):
        modes, durations = [0, 1], [2.51, 3.46]
        assert min(durations) < 2.7578
        assert cycle_spectral_radius(oscillator, modes, durations) > 1.1
        sig = cycle_signal(modes, durations, 1e4)
        traj = simulate(oscillator, sig, np.array([1.0, 1.0]), 1e4, dt=0.5)
        assert traj.diverged
        assert np.linalg.norm(traj.states[-1]) > 1e6


class TestDecay:
    def test_scalar_exponential(self):
        system = SwitchedAffineSystem.from_matrices([-np.eye(2)], [np.zeros(2)])
        traj = simulate(system, SwitchingSignal.constant(0), np.array([1.0, 0.0]), 10.0, dt=0.1)
        fit = decay_estimate([traj], lambda x: np.linalg.norm(x, axis=1))[0]
        assert fit.kappa == pytest.approx(1.0, rel=0.02)

    def test_shear_rate_against_ellipsoid(self, shear, k_q):
        ell = k_q.ellipsoid
        starts = ell.scaled(50.0).boundary_points(40)
        trajs = [simulate(shear, random_dwell_signal(2, 15.0, 0.0, seed=10, stream=k), x0, 15.0, dt=0.05)
                 for k, x0 in enumerate(starts)]
        vnorm = lambda x: np.maximum(ell.norm(x) - ell.level, 0.0)
        fits = decay_estimate(trajs, vnorm, lambda x: ell.contains(x))
        assert min(f.kappa for f in fits) >= 0.9 * 0.4785

    def test_norm_choice_does_not_change_rate(self, shear, k_q):
        ell = k_q.ellipsoid
        starts = ell.scaled(1e4).boundary_points(10)
        trajs = [simulate(shear, random_dwell_signal(2, 10.0, 0.0, seed=12, stream=k), x0, 10.0, dt=0.05)
                 for k, x0 in enumerate(starts)]
        inside = lambda x: ell.contains(x)
        vfit = decay_estimate(trajs, lambda x: np.maximum(ell.norm(x) - ell.level, 0.0), inside)
        efit = decay_estimate(trajs, ell.distance, inside)
        for a, b in zip(vfit, efit):
            assert a.kappa == pytest.approx(b.kappa, rel=0.1)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            decay_fit(np.arange(3.0), np.array([1.0, 0.0, 0.0]))


class TestNagumo:
    def test_ellipsoid_is_consistent(self, shear, k_q, rng):
        rep = nagumo_check(k_q.ellipsoid, shear, k_q.ellipsoid.boundary_points(1000, rng))
        assert rep.consistent()
        assert max(rep.max_inner) <= 1e-8
        assert rep.outward == [0, 0]

    def test_hyperbolic_region_points_outward_for_both_modes(self, shear):
        k = 0.1875
        region = SublevelSet(
            lambda x: k - (x[:, 0] + 1) * (x[:, 1] + 1),
            lambda x: np.stack([-(x[..., 1] + 1), -(x[..., 0] + 1)], axis=-1),
        )
        s = np.linspace(-3, 3, 601)
        boundary = np.stack([np.sqrt(k) * np.exp(s) - 1, np.sqrt(k) * np.exp(-s) - 1], axis=1)
        rep = nagumo_check(region, shear, boundary)
        assert all(v > 0 for v in rep.max_inner)
        assert all(o > 0 for o in rep.outward)
        assert not rep.consistent()

    def test_ball_under_radial_field(self):
        system = SwitchedAffineSystem.from_matrices([-np.eye(2)], [[1.0, 2.0]])
        ball = EllipsoidSet([1.0, 2.0], np.eye(2), 0.5)
        rep = nagumo_check(ball, system, ball.boundary_points(100))
        assert rep.max_inner[0] < 0
        assert rep.outward == [0]

    def test_square_corner_uses_worst_normal(self):
        from swinv.sets import Polytope
        box = Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
        system = SwitchedAffineSystem.from_matrices([[[-1.0, 0.0], [0.0, -1.0]]], [[1.5, 0.0]])
        rep = nagumo_check(box, system, np.array([[1.0, 1.0]]))
        assert rep.max_inner[0] > 0


def test_mode_field_matches_matrices():
    mode = Mode(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(mode.field(np.array([1.0, 2.0])), [3.0, -1.0])
