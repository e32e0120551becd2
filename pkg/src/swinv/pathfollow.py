"""Local optimization of the dwell-time norm centers by successive linearization.

Each iteration solves the coupled dwell-time LMIs with ``lifted(P_i, c_i)``
replaced by its first-order expansion around the current point, inside a box
of half-width ``delta`` on the ``P_i`` entries and on the center increments.
The centers are then moved, and the exact LMIs are re-solved at the new
centers so that every stored iterate is a valid certificate.

The increment variable ``chat_i`` follows a subtractive convention: the new
center is ``c_i - chat_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import sdp
from .dwell import (
    CERT_MARGIN,
    DwellCertificate,
    coupling_block,
    coupling_matrix,
    dwell_certificate,
    last_unit,
    lifted,
    lifted_derivative,
    selector,
)
from .errors import IterationLimitError, NumericFailure, StallError
from .numerics import augmented_exponential
from .system import SwitchedAffineSystem

log = logging.getLogger(__name__)

MAX_SHRINKS = 5
MONOTONE_TOL = 1e-6


def h_ij(system: SwitchedAffineSystem, tau: float, i: int, j: int, P: Sequence[np.ndarray],
         c: Sequence[np.ndarray], M: np.ndarray, d: np.ndarray) -> np.ndarray:
    """The coupling block for pair ``(i, j)`` as a function of norms and centers."""
    L = [lifted(Pk, ck) for Pk, ck in zip(P, c)]
    return coupling_block(coupling_matrix(system, tau, i, j, L), M, d)


def h_ij_center_derivative(system: SwitchedAffineSystem, tau: float, i: int, j: int,
                           P: Sequence[np.ndarray], c: Sequence[np.ndarray],
                           dc: Sequence[np.ndarray]) -> np.ndarray:
    """Directional derivative of :func:`h_ij` along center increments ``dc``."""
    n = system.dim
    dL = [lifted_derivative(Pk, ck, dk) for Pk, ck, dk in zip(P, c, dc)]
    dQ = coupling_matrix(system, tau, i, j, dL)
    out = np.zeros((2 * n + 1, 2 * n + 1))
    out[:n + 1, :n + 1] = -dQ
    return out


@dataclass
class PathFollowState:
    """Progress of the center optimization.

    Attributes:
        iteration: Number of accepted steps.
        cert: Current certificate, exact at its own centers.
        delta: Box half-width for the norm entries and center increments.
        eps: Relative objective change that stops the loop.
        objectives: Objective after each accepted step, starting with the equilibrium centers.
        centers: Centers after each accepted step.
        shrinks: Number of box halvings per accepted step.
    """

    iteration: int
    cert: DwellCertificate
    delta: float
    eps: float
    objectives: list[float] = field(default_factory=list)
    centers: list[list[np.ndarray]] = field(default_factory=list)
    shrinks: list[int] = field(default_factory=list)
    converged: bool = False

    def trace_rows(self) -> list[list[float]]:
        """``[iteration, objective, c_1..., c_M...]`` per accepted iterate."""
        return [[k, f] + [float(v) for c in cs for v in c]
                for k, (f, cs) in enumerate(zip(self.objectives, self.centers))]

    def trace_header(self) -> list[str]:
        n = self.cert.dim
        return ["iteration", "objective"] + [f"c{i + 1}_{k + 1}" for i in range(self.cert.num_modes) for k in range(n)]


@dataclass
class LinearizedStep:
    increments: list[np.ndarray]
    P: list[np.ndarray]
    objective: float
    delta: float
    report: sdp.SolverReport


def _linearized_program(system: SwitchedAffineSystem, cert: DwellCertificate, delta: float) -> sdp.ConeProgram:
    n, Mm, tau = system.dim, system.num_modes, cert.tau
    prog = sdp.ConeProgram("linearized")
    D = last_unit(n)
    flows = [augmented_exponential(m, tau) for m in system.modes]
    L = []
    for i in range(Mm):
        Ph = prog.symmetric(f"P{i}", n)
        ch = prog.vector(f"chat{i}", n)
        prog.add_lmi(Ph, margin=CERT_MARGIN, name=f"pd[{i + 1}]")
        prog.add_box(Ph, cert.P[i], delta, name=f"boxP[{i + 1}]")
        prog.add_box(ch, np.zeros((n, 1)), delta, name=f"boxc[{i + 1}]")
        N = selector(cert.c[i])
        PN = cert.P[i] @ N
        # derivative of N(c)' P N(c) along Delta = -chat: G = [0, Delta], dL = -(G' P N + N' P G)
        G = sdp.hstack([np.zeros((n, n)), -ch])
        L.append(Ph.left_mul(N.T) @ N - (G.T @ PN + G.left_mul(PN.T)))
    total = None
    for i in range(Mm):
        for j in range(Mm):
            M = prog.symmetric(f"M{i},{j}", n)
            d = prog.vector(f"d{i},{j}", n)
            if i == j:
                Aa = system[i].augmented()
                Q = Aa.T @ L[i] + L[i] @ Aa
            else:
                Q = flows[i].T @ L[i] @ flows[i] - L[j]
            T = sdp.vstack([np.eye(n), -d.T])
            prog.add_lmi(sdp.bmat([[-Q + D, T], [T.T, M]]), margin=CERT_MARGIN, name=f"coupling[{i + 1},{j + 1}]")
            total = M.trace() if total is None else total + M.trace()
    prog.minimize(total)
    return prog


def linearized_step(system: SwitchedAffineSystem, cert: DwellCertificate, delta: float = 0.1,
                    *, backend="clarabel", max_shrinks: int = MAX_SHRINKS) -> LinearizedStep:
    """Solves the linearized coupled LMIs around ``cert``.

    Only the norm matrices and center increments are boxed; the coupling
    variables enter linearly and stay free. An infeasible or failed
    subproblem halves ``delta`` and retries.

    Raises:
        StallError: Still unsolved after ``max_shrinks`` halvings.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    Mm = cert.num_modes
    for _ in range(max_shrinks + 1):
        prog = _linearized_program(system, cert, delta)
        hint_vals = {f"P{i}": cert.P[i] for i in range(Mm)}
        for i in range(Mm):
            hint_vals[f"chat{i}"] = np.full(cert.dim, max(delta, 1e-12))
            for j in range(Mm):
                hint_vals[f"M{i},{j}"] = cert.M[i][j]
                hint_vals[f"d{i},{j}"] = cert.d[i][j]
        rep = sdp.solve(prog, backend=backend, hint=prog.point(hint_vals))
        if rep.ok:
            return LinearizedStep(
                [np.asarray(rep[f"chat{i}"]).reshape(-1) for i in range(Mm)],
                [rep[f"P{i}"] for i in range(Mm)], float(rep.objective), delta, rep,
            )
        log.info("linearized step failed at delta=%g (%s); halving", delta, rep.status)
        delta *= 0.5
    raise StallError(f"linearized step unsolved after {max_shrinks} halvings")


def optimize_centers(system: SwitchedAffineSystem, tau: float, delta: float = 0.1, eps: float = 1e-3,
                     max_iter: int = 200, *, backend="clarabel") -> PathFollowState:
    """Moves the centers from the equilibria to a local minimizer of the trace objective.

    A step is accepted once the exact LMIs re-solved at the new centers
    give an objective no larger than ``(1 + 1e-6)`` times the current one;
    otherwise the box is halved and the step retried. The loop stops when
    the relative change of consecutive objectives is at most ``eps``. A
    single-mode system returns its equilibrium-centered certificate at once.

    Raises:
        StallError: No acceptable step after repeated halving.
        IterationLimitError: ``max_iter`` steps without convergence; the
            partial state is attached.
    """
    if delta <= 0 or eps <= 0:
        raise ValueError("delta and eps must be positive")
    centers = [np.asarray(x, dtype=float) for x in system.equilibria()]
    cert = dwell_certificate(system, tau, centers, backend=backend)
    state = PathFollowState(0, cert, delta, eps, [cert.objective], [list(centers)], [0])
    if system.num_modes == 1:
        # no coupling to trade off: the equilibrium center is already optimal
        state.converged = True
        return state
    while state.iteration < max_iter:
        step_delta = delta
        for shrink in range(MAX_SHRINKS + 1):
            step = linearized_step(system, state.cert, step_delta, backend=backend)
            new_c = [c - dc for c, dc in zip(state.cert.c, step.increments)]
            try:
                new = dwell_certificate(system, tau, new_c, backend=backend, hint=state.cert)
            except NumericFailure:
                new = None
            f = state.cert.objective
            if new is not None and new.objective <= f * (1.0 + MONOTONE_TOL):
                break
            step_delta = 0.5 * step.delta
        else:
            raise StallError(f"no acceptable step at iteration {state.iteration + 1}")
        state.iteration += 1
        state.cert = new
        state.objectives.append(new.objective)
        state.centers.append(list(new_c))
        state.shrinks.append(shrink)
        log.info("iteration %d: objective %.6g", state.iteration, new.objective)
        if abs(new.objective - f) <= eps * new.objective:
            state.converged = True
            return state
    raise IterationLimitError(f"no convergence within {max_iter} iterations", state)
