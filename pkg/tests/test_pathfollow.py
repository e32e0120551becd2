import numpy as np
import pytest

from swinv import dwell, pathfollow
from swinv.errors import IterationLimitError
from swinv.system import SwitchedAffineSystem


@pytest.fixture(scope="module")
def three_mode_cert(three_mode):
    return dwell.dwell_certificate(three_mode, 0.5)


def test_zero_box_keeps_objective(three_mode, three_mode_cert):
    step = pathfollow.linearized_step(three_mode, three_mode_cert, delta=0.0)
    for inc in step.increments:
        np.testing.assert_allclose(inc, 0.0, atol=1e-6)
    assert step.objective == pytest.approx(three_mode_cert.objective, rel=1e-4)


def test_linearized_objective_not_worse(three_mode, three_mode_cert):
    step = pathfollow.linearized_step(three_mode, three_mode_cert, delta=0.1)
    assert step.objective <= three_mode_cert.objective * (1 + 1e-6)
    assert all(np.abs(inc).max() <= step.delta + 1e-7 for inc in step.increments)


def test_single_step_is_monotone(three_mode):
    with pytest.raises(IterationLimitError) as info:
        pathfollow.optimize_centers(three_mode, 0.5, max_iter=1)
    state = info.value.partial
    assert state.iteration == 1
    assert state.objectives[1] <= state.objectives[0] * (1 + 1e-6)


def test_center_derivative_by_finite_differences(three_mode, three_mode_cert, rng):
    cert = three_mode_cert
    P, c = list(cert.P), [ci.copy() for ci in cert.c]
    dc = [rng.standard_normal(2) for _ in c]
    h = 1e-6
    for i in range(3):
        for j in range(3):
            M, d = cert.M[i][j], cert.d[i][j]
            plus = pathfollow.h_ij(three_mode, cert.tau, i, j, P, [a + h * b for a, b in zip(c, dc)], M, d)
            minus = pathfollow.h_ij(three_mode, cert.tau, i, j, P, [a - h * b for a, b in zip(c, dc)], M, d)
            fd = (plus - minus) / (2 * h)
            exact = pathfollow.h_ij_center_derivative(three_mode, cert.tau, i, j, P, c, dc)
            scale = 1 + np.abs(exact).max()
            assert np.abs(fd - exact).max() <= 1e-6 * scale


def test_h_ij_matches_certificate_block(three_mode, three_mode_cert):
    cert = three_mode_cert
    H = pathfollow.h_ij(three_mode, cert.tau, 0, 1, cert.P, cert.c, cert.M[0][1], cert.d[0][1])
    assert H.shape == (5, 5)
    assert np.linalg.eigvalsh(H).min() >= -1e-6 * np.abs(H).max()


def test_single_mode_converges_at_once():
    system = SwitchedAffineSystem.from_matrices([[[-1.0, 0.5], [0.0, -2.0]]], [[1.0, 0.0]])
    state = pathfollow.optimize_centers(system, 1.0, max_iter=5)
    assert state.converged
    assert state.iteration == 0
    np.testing.assert_allclose(state.cert.c[0], system.equilibria()[0], atol=1e-6)


def test_starts_at_equilibria_and_exports_trace(three_mode):
    with pytest.raises(IterationLimitError) as info:
        pathfollow.optimize_centers(three_mode, 0.5, max_iter=2)
    state = info.value.partial
    for c, xe in zip(state.centers[0], three_mode.equilibria()):
        np.testing.assert_array_equal(c, xe)
    rows = state.trace_rows()
    header = state.trace_header()
    assert len(rows) == 3
    assert all(len(r) == len(header) == 8 for r in rows)
    assert [r[0] for r in rows] == [0, 1, 2]


def test_rejects_bad_parameters(three_mode):
    with pytest.raises(ValueError):
        pathfollow.optimize_centers(three_mode, 0.5, delta=0.0)
    with pytest.raises(ValueError):
        pathfollow.linearized_step(three_mode, None, delta=-1.0)
