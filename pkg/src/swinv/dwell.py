"""Dwell-time analysis: minimum dwell time, translated quadratic norms, safety sets.

Notation used throughout, for a state dimension ``n`` and augmented state
``xi = (x, 1)``:

* ``calA_i = [[A_i, b_i], [0, 0]]`` so that ``d xi / dt = calA_i xi``.
* ``N(c) = [I, -c]`` and ``lifted(P, c) = N(c)' P N(c)``; then
  ``xi' lifted(P, c) xi = (x - c)' P (x - c)``.
* ``E(W, d) = [[W, -W d], [-d' W, d' W d - 1]]`` describes the ellipsoid
  ``{(x - d)' W (x - d) <= 1}`` as ``{xi' E xi <= 0}``.

The coupled conditions ``Q_ij < -E_ij`` with
``Q_ii = calA_i' L_i + L_i calA_i`` and
``Q_ij = exp(calA_i tau)' L_i exp(calA_i tau) - L_j`` (``L_i`` the lifted
``P_i``) are solved in the Schur-complement form

    [[-Q_ij + D, T(d_ij)], [T(d_ij)', M_ij]] > 0,   T(d)' = [I, -d],

with ``D = diag(0, ..., 0, 1)`` and ``W_ij = M_ij^{-1}``, minimizing the sum of
``trace(M_ij)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import sdp
from .errors import CertificateInconsistency, InfeasibleError, NumericFailure
from .numerics import augmented_exponential, matrix_exponential, symmetrize
from .sets import EllipsoidSet
from .system import SwitchedAffineSystem, spectral_abscissa

log = logging.getLogger(__name__)

DWELL_LMI_MARGIN = 1e-7
CERT_MARGIN = 1e-9


# ---------------------------------------------------------------------------
# structural helpers


def selector(c: np.ndarray) -> np.ndarray:
    """``N(c) = [I, -c]``."""
    c = np.asarray(c, dtype=float).reshape(-1)
    return np.hstack([np.eye(c.size), -c[:, None]])


def lifted(P: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``N(c)' P N(c)``, the augmented matrix of ``(x - c)' P (x - c)``."""
    N = selector(c)
    return N.T @ P @ N


def lifted_derivative(P: np.ndarray, c: np.ndarray, dc: np.ndarray) -> np.ndarray:
    """Directional derivative of ``lifted(P, c)`` with respect to ``c`` along ``dc``."""
    n = P.shape[0]
    N = selector(c)
    G = np.hstack([np.zeros((n, n)), np.asarray(dc, dtype=float).reshape(-1, 1)])
    return -(G.T @ P @ N + N.T @ P @ G)


def last_unit(n: int) -> np.ndarray:
    """``D = diag(0, ..., 0, 1)`` of size ``n + 1``."""
    D = np.zeros((n + 1, n + 1))
    D[n, n] = 1.0
    return D


def ellipsoid_matrix(W: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``E(W, d)`` with ``xi' E xi = (x - d)' W (x - d) - 1``."""
    d = np.asarray(d, dtype=float).reshape(-1)
    Wd = W @ d
    n = d.size
    E = np.zeros((n + 1, n + 1))
    E[:n, :n] = W
    E[:n, n] = -Wd
    E[n, :n] = -Wd
    E[n, n] = d @ Wd - 1.0
    return E


def coupling_matrix(system: SwitchedAffineSystem, tau: float, i: int, j: int,
                    L: Sequence[np.ndarray], flows: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """``Q_ij`` from the lifted matrices ``L``; flow condition when ``i == j``."""
    if i == j:
        Aa = system[i].augmented()
        return Aa.T @ L[i] + L[i] @ Aa
    F = flows[i] if flows is not None else augmented_exponential(system[i], tau)
    return F.T @ L[i] @ F - L[j]


def coupling_block(Q: np.ndarray, M: np.ndarray, d: np.ndarray) -> np.ndarray:
    """The Schur-complement block ``[[-Q + D, T], [T', M]]``."""
    n = M.shape[0]
    T = np.vstack([np.eye(n), -np.asarray(d, dtype=float).reshape(1, -1)])
    return np.block([[-Q + last_unit(n), T], [T.T, M]])


# ---------------------------------------------------------------------------
# certificate


@dataclass(frozen=True)
class DwellCertificate:
    """Translated quadratic norms certifying ultimate boundedness for dwell time ``tau``.

    Attributes:
        tau: Dwell time.
        P: Per-mode norm matrices.
        c: Per-mode centers.
        M: Coupling matrices ``M[i][j]`` (inverse of the ellipsoid shape ``W_ij``).
        d: Ellipsoid centers ``d[i][j]``.
        objective: Sum of ``trace(M_ij)``.
        R_X: Safety radius, once computed.
        gamma: ``R_X ** 2``.
        beta: S-procedure multipliers of the radius problem.
    """

    tau: float
    P: tuple[np.ndarray, ...]
    c: tuple[np.ndarray, ...]
    M: tuple[tuple[np.ndarray, ...], ...]
    d: tuple[tuple[np.ndarray, ...], ...]
    objective: float
    R_X: float | None = None
    gamma: float | None = None
    beta: tuple[tuple[float, ...], ...] | None = None
    diagnostics: tuple[str, ...] = ()

    @property
    def num_modes(self) -> int:
        return len(self.P)

    @property
    def dim(self) -> int:
        return self.P[0].shape[0]

    def lifted(self, i: int) -> np.ndarray:
        return lifted(self.P[i], self.c[i])

    def W(self, i: int, j: int) -> np.ndarray:
        return np.linalg.inv(self.M[i][j])

    def E(self, i: int, j: int) -> np.ndarray:
        return ellipsoid_matrix(self.W(i, j), self.d[i][j])

    def vtilde(self, i: int, x: np.ndarray) -> np.ndarray:
        """Translated norm ``sqrt((x - c_i)' P_i (x - c_i))`` row-wise."""
        y = np.atleast_2d(np.asarray(x, dtype=float)) - self.c[i]
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", y, self.P[i], y), 0.0))

    def safety_sets(self) -> list[EllipsoidSet]:
        if self.R_X is None:
            raise ValueError("safety radius not computed yet")
        return [EllipsoidSet.from_quadratic(P, c, self.R_X) for P, c in zip(self.P, self.c)]

    def in_safety_set(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Membership in ``X = union of X_i`` row-wise."""
        x = np.atleast_2d(x)
        vals = np.stack([self.vtilde(i, x) for i in range(self.num_modes)])
        return np.min(vals, axis=0) <= self.R_X * (1.0 + tol)

    def to_dict(self) -> dict:
        return {
            "schema": "swinv/1",
            "kind": "dwell",
            "tau": self.tau,
            "P": [P.tolist() for P in self.P],
            "c": [c.tolist() for c in self.c],
            "M": [[M.tolist() for M in row] for row in self.M],
            "d": [[d.tolist() for d in row] for row in self.d],
            "objective": self.objective,
            "R_X": self.R_X,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DwellCertificate":
        if data.get("kind") != "dwell":
            raise ValueError(f"expected a dwell certificate, got {data.get('kind')!r}")
        R = data.get("R_X")
        return cls(
            float(data["tau"]),
            tuple(np.array(P, dtype=float) for P in data["P"]),
            tuple(np.array(c, dtype=float) for c in data["c"]),
            tuple(tuple(np.array(M, dtype=float) for M in row) for row in data["M"]),
            tuple(tuple(np.array(d, dtype=float) for d in row) for row in data["d"]),
            float(data.get("objective", math.nan)),
            None if R is None else float(R),
            None if R is None else float(R) ** 2,
        )


# ---------------------------------------------------------------------------
# minimum dwell time


def dwell_lmi_status(system: SwitchedAffineSystem, tau: float, *, backend="clarabel",
                   margin: float = DWELL_LMI_MARGIN) -> str:
    """``optimal`` if the multiple-Lyapunov dwell-time LMIs are feasible at ``tau``.

    The LMIs are ``A_i' P_i + P_i A_i < 0`` and
    ``exp(A_i tau)' P_j exp(A_i tau) - P_i < 0`` for ``i != j``, normalized by
    ``P_i >= I``. Returns ``infeasible`` or ``numeric-failure`` otherwise.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = system.dim
    prog = sdp.ConeProgram("dwell-lmi")
    P = [prog.symmetric(f"P{i + 1}", n) for i in range(system.num_modes)]
    for i, mode in enumerate(system.modes):
        A = mode.A
        prog.add_lmi(P[i] - np.eye(n), name=f"normalization[{i + 1}]")
        prog.add_lmi(-(A.T @ P[i] + P[i] @ A), margin=margin, name=f"flow[{i + 1}]")
        F = matrix_exponential(A, tau)
        for j in range(system.num_modes):
            if i != j:
                prog.add_lmi(-(F.T @ P[j] @ F - P[i]), margin=margin, name=f"jump[{i + 1},{j + 1}]")
    return sdp.solve(prog, backend=backend, rescale=False).status


def dwell_lmi_feasible(system: SwitchedAffineSystem, tau: float, *, backend="clarabel") -> bool:
    """True iff the dwell-time LMIs are feasible at ``tau``.

    Raises:
        NumericFailure: The solver outcome is indeterminate.
    """
    status = dwell_lmi_status(system, tau, backend=backend)
    if status == sdp.NUMERIC_FAILURE:
        raise NumericFailure(f"dwell-time feasibility at tau={tau:g} is indeterminate")
    return status == sdp.OPTIMAL


def common_lyapunov_exists(system: SwitchedAffineSystem, *, backend="clarabel") -> bool:
    """True iff one quadratic Lyapunov function serves every linear part."""
    n = system.dim
    prog = sdp.ConeProgram("common")
    P = prog.symmetric("P", n)
    prog.add_lmi(P - np.eye(n))
    for mode in system.modes:
        prog.add_lmi(-(mode.A.T @ P + P @ mode.A), margin=DWELL_LMI_MARGIN)
    return sdp.solve(prog, backend=backend, rescale=False).ok


@dataclass
class DwellSearch:
    tau: float
    bracket: tuple[float, float]
    evaluations: list[tuple[float, str]] = field(default_factory=list)

    def __float__(self) -> float:
        return self.tau


def min_dwell_time(system: SwitchedAffineSystem, tol: float = 0.01, *, tau_hi: float = 1.0,
                   max_doublings: int = 30, backend="clarabel") -> DwellSearch:
    """Upper estimate of the minimum dwell time from quadratic certificates.

    Bisection over :func:`dwell_lmi_status` on ``[0, tau_hi]``, doubling
    ``tau_hi`` until feasible. Indeterminate solver outcomes are treated as
    infeasible so the returned value remains certified.

    Raises:
        InfeasibleError: A mode is not Hurwitz, or the bracket never becomes feasible.
    """
    for k, mode in enumerate(system.modes):
        if spectral_abscissa(mode.A) >= 0:
            raise InfeasibleError(f"mode {k + 1} is not Hurwitz; no finite quadratic dwell time")
    if system.num_modes == 1 or common_lyapunov_exists(system, backend=backend):
        return DwellSearch(0.0, (0.0, 0.0))
    evals = []

    def ok(t):
        st = dwell_lmi_status(system, t, backend=backend)
        evals.append((t, st))
        return st == sdp.OPTIMAL

    lo, hi = 0.0, float(tau_hi)
    doublings = 0
    while not ok(hi):
        lo = hi
        hi *= 2.0
        doublings += 1
        if doublings > max_doublings:
            raise InfeasibleError("dwell-time bracket exhausted without a feasible point")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return DwellSearch(hi, (lo, hi), evals)


# ---------------------------------------------------------------------------
# coupled LMIs


def _certificate_program(system: SwitchedAffineSystem, tau: float, centers: Sequence[np.ndarray],
                         margin: float) -> sdp.ConeProgram:
    n, Mm = system.dim, system.num_modes
    prog = sdp.ConeProgram("dwell")
    P = [prog.symmetric(f"P{i}", n) for i in range(Mm)]
    L = []
    for i in range(Mm):
        N = selector(centers[i])
        L.append(P[i].left_mul(N.T) @ N)
        prog.add_lmi(P[i], margin=margin, name=f"pd[{i + 1}]")
    _add_coupling_blocks(prog, system, tau, L, margin)
    return prog


def _add_coupling_blocks(prog: sdp.ConeProgram, system: SwitchedAffineSystem, tau: float,
                         L: Sequence[sdp.Affine], margin: float) -> None:
    n, Mm = system.dim, system.num_modes
    D = last_unit(n)
    flows = [augmented_exponential(m, tau) for m in system.modes]
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
            block = sdp.bmat([[-Q + D, T], [T.T, M]])
            prog.add_lmi(block, margin=margin, name=f"coupling[{i + 1},{j + 1}]")
            total = M.trace() if total is None else total + M.trace()
    prog.minimize(total)


def _unpack_certificate(rep: sdp.SolverReport, tau: float, centers, Mm: int) -> DwellCertificate:
    P = tuple(symmetrize(rep[f"P{i}"]) for i in range(Mm))
    M = tuple(tuple(symmetrize(rep[f"M{i},{j}"]) for j in range(Mm)) for i in range(Mm))
    d = tuple(tuple(np.asarray(rep[f"d{i},{j}"]).reshape(-1) for j in range(Mm)) for i in range(Mm))
    return DwellCertificate(float(tau), P, tuple(np.asarray(c, dtype=float).copy() for c in centers),
                            M, d, float(rep.objective))


def certificate_hint(prog: sdp.ConeProgram, cert: DwellCertificate) -> np.ndarray:
    """Program point built from an existing certificate; used to set solver scaling."""
    vals = {}
    Mm = cert.num_modes
    for i in range(Mm):
        vals[f"P{i}"] = cert.P[i]
        for j in range(Mm):
            vals[f"M{i},{j}"] = cert.M[i][j]
            vals[f"d{i},{j}"] = cert.d[i][j]
    return prog.point({k: v for k, v in vals.items() if k in prog.groups})


def dwell_certificate(system: SwitchedAffineSystem, tau: float, centers: Sequence[np.ndarray] | None = None,
                      *, backend="clarabel", margin: float = CERT_MARGIN,
                      hint: DwellCertificate | None = None) -> DwellCertificate:
    """Solves the coupled LMIs for fixed centers, minimizing the sum of ``trace(M_ij)``.

    Args:
        system: Switched affine system.
        tau: Dwell time.
        centers: Per-mode centers; defaults to the mode equilibria.
        margin: Strictness margin on every block.
        hint: Previous certificate whose magnitudes set the solver scaling.

    Raises:
        NumericFailure: The program is infeasible or the solution fails
            re-verification. Infeasibility cannot occur above the quadratic
            minimum dwell time, so it is reported as a numerical problem.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    Mm = system.num_modes
    if centers is None:
        centers = system.equilibria()
    centers = [np.asarray(c, dtype=float).reshape(-1) for c in centers]
    prog = _certificate_program(system, tau, centers, margin)
    x_hint = None if hint is None else certificate_hint(prog, hint)
    rep = sdp.solve(prog, backend=backend, hint=x_hint)
    if not rep.ok:
        raise NumericFailure(
            f"coupled LMIs at tau={tau:g} returned {rep.status} ({rep.solver_status}); "
            "tau may be below the quadratic minimum dwell time"
        )
    cert = _unpack_certificate(rep, tau, centers, Mm)
    return replace(cert, diagnostics=tuple(rep.diagnostics))


def schur_residuals(system: SwitchedAffineSystem, cert: DwellCertificate) -> np.ndarray:
    """Largest eigenvalue of ``Q_ij + E_ij`` relative to the data scale, per pair.

    Non-positive entries mean the original (pre-Schur) inequalities hold.
    """
    Mm = cert.num_modes
    L = [cert.lifted(i) for i in range(Mm)]
    flows = [augmented_exponential(m, cert.tau) for m in system.modes]
    out = np.zeros((Mm, Mm))
    for i in range(Mm):
        for j in range(Mm):
            Q = coupling_matrix(system, cert.tau, i, j, L, flows)
            E = cert.E(i, j)
            top = np.linalg.eigvalsh(symmetrize(Q + E))[-1]
            out[i, j] = top / (1.0 + np.linalg.norm(Q, 2) + np.linalg.norm(E, 2))
    return out


def implied_dwell_margin(system: SwitchedAffineSystem, cert: DwellCertificate) -> float:
    """Largest eigenvalue in the dwell-time LMIs for ``P~_i = exp(A_i tau)' P_i exp(A_i tau)``.

    Negative values confirm that the coupled certificate implies the
    linear dwell-time conditions.
    """
    Mm = cert.num_modes
    F = [matrix_exponential(m.A, cert.tau) for m in system.modes]
    Pt = [F[i].T @ cert.P[i] @ F[i] for i in range(Mm)]
    worst = -np.inf
    for i, mode in enumerate(system.modes):
        A = mode.A
        flow = A.T @ Pt[i] + Pt[i] @ A
        worst = max(worst, np.linalg.eigvalsh(symmetrize(flow))[-1] / np.linalg.norm(Pt[i], 2))
        for j in range(Mm):
            if i != j:
                jump = F[i].T @ Pt[j] @ F[i] - Pt[i]
                worst = max(worst, np.linalg.eigvalsh(symmetrize(jump))[-1] / np.linalg.norm(Pt[i], 2))
    return float(worst)


# ---------------------------------------------------------------------------
# safety radius


def safety_radius(cert: DwellCertificate, *, backend="clarabel", check: bool = True) -> DwellCertificate:
    """Smallest common radius with ``X_j`` containing every ellipsoid ``E_ij``.

    Solves ``min gamma`` subject to ``beta_ij E_ij - L_j + gamma D >= 0`` and
    ``beta_ij >= 0``, then sets ``R_X = sqrt(gamma)``.

    Raises:
        CertificateInconsistency: The radius problem fails for a valid certificate,
            or a post-check (ellipsoid containment, equilibria inside) fails.
    """
    Mm, n = cert.num_modes, cert.dim
    D = last_unit(n)
    prog = sdp.ConeProgram("radius")
    gamma = prog.scalar("gamma")
    prog.add_nonneg(gamma)
    betas = {}
    for i in range(Mm):
        for j in range(Mm):
            b = prog.scalar(f"beta{i},{j}")
            betas[i, j] = b
            prog.add_nonneg(b)
            block = b * cert.E(i, j) - cert.lifted(j) + gamma * D
            prog.add_lmi(block, name=f"contain[{i + 1},{j + 1}]")
    prog.minimize(gamma)
    rep = sdp.solve(prog, backend=backend)
    if not rep.ok:
        raise CertificateInconsistency(f"safety radius problem returned {rep.status} ({rep.solver_status})")
    g = float(rep["gamma"])
    out = replace(cert, R_X=math.sqrt(g), gamma=g,
                  beta=tuple(tuple(float(rep[f"beta{i},{j}"]) for j in range(Mm)) for i in range(Mm)))
    if check:
        worst = ellipsoid_containment_ratio(out)
        if worst > 1.0 + 1e-5:
            raise CertificateInconsistency(f"ellipsoid E_ij leaves X_j (ratio {worst:.6f})")
    return out


def ellipsoid_containment_ratio(cert: DwellCertificate, samples: int = 256, seed: int = 0) -> float:
    """Max of ``vtilde_j(x)^2 / gamma`` over boundary samples of every ``E_ij``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(cert.num_modes):
        for j in range(cert.num_modes):
            ell = EllipsoidSet(cert.d[i][j], cert.M[i][j])
            pts = ell.boundary_points(samples, None if cert.dim == 2 else rng)
            worst = max(worst, float(np.max(cert.vtilde(j, pts) ** 2)) / cert.gamma)
    return worst


def equilibria_margin(system: SwitchedAffineSystem, cert: DwellCertificate) -> np.ndarray:
    """``vtilde_i(x_ei) / R_X`` per mode; values below one place ``x_ei`` inside ``X_i``."""
    return np.array([float(cert.vtilde(i, xe)[0]) / cert.R_X for i, xe in enumerate(system.equilibria())])


def switching_growth(system: SwitchedAffineSystem, cert: DwellCertificate, samples: int = 720,
                     seed: int = 0) -> np.ndarray:
    """``max vtilde_i(Psi_i(tau, x)) / R_X`` over ``x`` on the boundary of ``X_j``.

    Entry ``[i, j]`` below one means ``Psi_i(tau, X_j)`` lies inside ``X_i``;
    the maximum over a convex set of this convex function sits on the boundary.
    """
    rng = np.random.default_rng(seed)
    sets = cert.safety_sets()
    Mm = cert.num_modes
    out = np.zeros((Mm, Mm))
    for j in range(Mm):
        pts = sets[j].boundary_points(samples, None if cert.dim == 2 else rng)
        xi = np.hstack([pts, np.ones((pts.shape[0], 1))])
        for i in range(Mm):
            F = augmented_exponential(system[i], cert.tau)
            moved = (xi @ F.T)[:, :-1]
            out[i, j] = float(np.max(cert.vtilde(i, moved))) / cert.R_X
    return out


def switching_contraction(system: SwitchedAffineSystem, cert: DwellCertificate, samples: int = 720) -> float:
    """Contraction rate at switching instants implied by :func:`switching_growth`."""
    g = float(np.max(switching_growth(system, cert, samples)))
    return -math.log(g) / cert.tau if g > 0 else math.inf


# ---------------------------------------------------------------------------
# analytic radius


def dwell_decay_norms(system: SwitchedAffineSystem, tau: float, tol: float = 1e-4, *,
                      backend="clarabel") -> tuple[list[np.ndarray], float]:
    """Quadratic norms with the largest common decay rate for dwell time ``tau``.

    Finds ``P_i`` and the largest ``kappa`` (by bisection) with
    ``A_i' P_i + P_i A_i <= -2 kappa P_i`` and
    ``exp(A_i tau)' P_i exp(A_i tau) <= exp(-2 kappa tau) P_j``.

    Raises:
        InfeasibleError: No such norms exist even as ``kappa -> 0``.
    """
    n, Mm = system.dim, system.num_modes
    F = [matrix_exponential(m.A, tau) for m in system.modes]

    def attempt(kappa):
        prog = sdp.ConeProgram("decay-norms")
        P = [prog.symmetric(f"P{i}", n) for i in range(Mm)]
        for i, mode in enumerate(system.modes):
            A = mode.A
            prog.add_lmi(P[i] - np.eye(n))
            prog.add_lmi(-(A.T @ P[i] + P[i] @ A + 2 * kappa * P[i]), margin=DWELL_LMI_MARGIN)
            for j in range(Mm):
                if i != j:
                    prog.add_lmi(-(F[i].T @ P[i] @ F[i] - math.exp(-2 * kappa * tau) * P[j]),
                                 margin=DWELL_LMI_MARGIN)
        rep = sdp.solve(prog, backend=backend, rescale=False)
        return [symmetrize(rep[f"P{i}"]) for i in range(Mm)] if rep.ok else None

    hi = min(-spectral_abscissa(m.A) for m in system.modes)
    if hi <= 0:
        raise InfeasibleError("a mode is not Hurwitz")
    lo = min(tol, 0.5 * hi)
    best = attempt(lo)
    if best is None:
        raise InfeasibleError(f"no decaying quadratic norms at tau={tau:g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cand = attempt(mid)
        if cand is None:
            hi = mid
        else:
            lo, best = mid, cand
    return best, lo


def r_ij_analytic(system: SwitchedAffineSystem, P: Sequence[np.ndarray], centers: Sequence[np.ndarray],
                  kappa: float, tau: float, kappa_tilde: float | None = None) -> tuple[np.ndarray, float]:
    """Radii from the closed-form bound for norms that decay at rate ``kappa``.

    ``R_ij = [exp(-kappa tau) vtilde_j(c_i) + (1 - exp(-kappa tau)) v_i(A_i c_i + b_i) / kappa]
    / (exp(-kappa_tilde tau) - exp(-kappa tau))``.

    Args:
        kappa_tilde: Contraction at switching instants, ``0 < kappa_tilde < kappa``;
            defaults to ``kappa / 2``.

    Returns:
        The matrix of ``R_ij`` and ``R_X = max R_ij``.
    """
    if kappa_tilde is None:
        kappa_tilde = kappa / 2.0
    if not 0.0 < kappa_tilde < kappa:
        raise ValueError("need 0 < kappa_tilde < kappa")
    Mm = len(P)
    e = math.exp(-kappa * tau)
    denom = math.exp(-kappa_tilde * tau) - e
    R = np.zeros((Mm, Mm))
    for i in range(Mm):
        ci = np.asarray(centers[i], dtype=float)
        g = system[i].A @ ci + system[i].b
        drift = math.sqrt(max(float(g @ P[i] @ g), 0.0))
        for j in range(Mm):
            y = ci - np.asarray(centers[j], dtype=float)
            R[i, j] = (e * math.sqrt(max(float(y @ P[j] @ y), 0.0)) + (1.0 - e) * drift / kappa) / denom
    return R, float(R.max())


# ---------------------------------------------------------------------------
# bounding region


@dataclass
class MembershipResult:
    inside: bool
    witness: tuple[int, int, float] | None
    value: float


class BoundingRegion:
    """Membership oracle for ``V = union over i, j, t in [0, tau] of Psi_j(t, X_i)``.

    The time interval is discretized into ``m`` steps. Points whose grid value
    lies in ``(1, refine_band]`` are re-tested on a grid ``refine`` times
    finer, which recovers thin slivers between coarse grid times; the residual
    resolution caveat is part of the result semantics. The default band
    ``1 + 0.25 (200 / m)^2`` (at least 1.05) follows the quadratic growth of
    the interpolation error with the step.
    """

    def __init__(self, system: SwitchedAffineSystem, cert: DwellCertificate, m: int = 200,
                 refine: int = 32, refine_band: float | None = None):
        if m < 2:
            raise ValueError("time grid needs m >= 2")
        if cert.R_X is None:
            raise ValueError("certificate has no safety radius")
        self.system = system
        self.cert = cert
        self.m = m
        self.refine_band = refine_band if refine_band is not None else max(1.05, 1.0 + 0.25 * (200.0 / m) ** 2)
        self.times = np.linspace(0.0, cert.tau, m + 1)
        n = cert.dim
        self._ia, self._ib = np.triu_indices(n + 1)
        self._coef, self._index = self._tables(self.times)
        self._fine_times = np.linspace(0.0, cert.tau, m * max(refine, 1) + 1)
        self._fine = self._tables(self._fine_times) if refine > 1 else None

    def _tables(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # xi' G xi with G = B' lifted(P_i, c_i) B and B = exp(-calA_j t) the backward flow,
        # stored as coefficients on the monomials xi_a xi_b (a <= b)
        cert = self.cert
        weight = np.where(self._ia == self._ib, 1.0, 2.0)
        # uniform grid: exp(-calA_j t_k) as powers of the one-step backward flow
        flows = []
        for mode in self.system.modes:
            step = augmented_exponential(mode, -(times[1] - times[0]))
            B = np.empty((times.size, cert.dim + 1, cert.dim + 1))
            B[0] = np.eye(cert.dim + 1)
            for k in range(1, times.size):
                B[k] = B[k - 1] @ step
            flows.append(B)
        cols, index = [], []
        for i in range(cert.num_modes):
            L = cert.lifted(i)
            for j in range(self.system.num_modes):
                G = np.einsum("kab,bc,kcd->kad", flows[j].transpose(0, 2, 1), L, flows[j])
                cols.append(weight * G[:, self._ia, self._ib])
                index.extend((i, j, k) for k in range(times.size))
        return np.vstack(cols).T / cert.R_X**2, np.array(index, dtype=int)

    @staticmethod
    def _argmin(mono: np.ndarray, coef: np.ndarray, index: np.ndarray, times: np.ndarray):
        q = mono @ coef
        qmin = q.min(axis=1, keepdims=True)
        # round-off ties go to the earliest (i, j, t), so x_ei reports (i, i, 0)
        k = np.argmax(q <= qmin + 1e-12 * (1.0 + np.abs(qmin)), axis=1)
        idx = index[k]
        val = np.sqrt(np.maximum(q[np.arange(q.shape[0]), k], 0.0))
        t = times[idx[:, 2]]
        # at t = 0 the flowing mode is immaterial; report j = i
        j = np.where(t == 0.0, idx[:, 0], idx[:, 1])
        return val, np.column_stack([idx[:, 0], j, t])

    def values(self, x: np.ndarray, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        """Min over (i, j, t) of ``vtilde_i(Psi_j(-t, x)) / R_X`` and its argmin rows ``(i, j, t)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        best = np.empty(x.shape[0])
        arg = np.empty((x.shape[0], 3))
        for s in range(0, x.shape[0], chunk):
            xs = x[s:s + chunk]
            xi = np.hstack([xs, np.ones((xs.shape[0], 1))])
            mono = xi[:, self._ia] * xi[:, self._ib]
            val, wit = self._argmin(mono, self._coef, self._index, self.times)
            if self._fine is not None:
                near = np.flatnonzero((val > 1.0) & (val <= self.refine_band))
                for r in range(0, near.size, 256):
                    rows = near[r:r + 256]
                    fv, fw = self._argmin(mono[rows], *self._fine, self._fine_times)
                    better = fv < val[rows]
                    val[rows[better]], wit[rows[better]] = fv[better], fw[better]
            best[s:s + chunk], arg[s:s + chunk] = val, wit
        return best, arg

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.values(x)[0] <= 1.0 + tol

    def membership(self, x: np.ndarray, tol: float = 0.0) -> MembershipResult:
        val, arg = self.values(np.asarray(x, dtype=float).reshape(1, -1))
        inside = bool(val[0] <= 1.0 + tol)
        i, j, t = arg[0]
        return MembershipResult(inside, (int(i), int(j), float(t)) if inside else None, float(val[0]))

    def image_ellipses(self) -> list[tuple[int, int, float, np.ndarray, np.ndarray]]:
        """``(i, j, t, center, shape)`` of every flowed ellipse ``Psi_j(t, X_i)``."""
        out = []
        cert = self.cert
        for i in range(cert.num_modes):
            S = np.linalg.inv(cert.P[i]) * cert.R_X**2
            for j, mode in enumerate(self.system.modes):
                for t in self.times:
                    F = augmented_exponential(mode, t)
                    n = cert.dim
                    center = F[:n, :n] @ cert.c[i] + F[:n, n]
                    out.append((i, j, float(t), center, F[:n, :n] @ S @ F[:n, :n].T))
        return out

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = None, None
        for _, _, _, c, S in self.image_ellipses():
            half = np.sqrt(np.diag(S))
            lo = c - half if lo is None else np.minimum(lo, c - half)
            hi = c + half if hi is None else np.maximum(hi, c + half)
        return lo, hi

    def rasterize(self, xlim: tuple[float, float], ylim: tuple[float, float],
                  shape: tuple[int, int] = (400, 400), per_source: bool = False):
        """Boolean raster of ``V`` (or of each ``V_i``) on pixel centers of a fixed grid.

        Every flowed ellipse is tested only on the pixels of its bounding box,
        which gives the same answer as calling :meth:`contains` per pixel.

        Returns:
            ``(mask, xs, ys)`` with ``mask[row, col]`` for point ``(xs[col], ys[row])``;
            ``mask`` has a leading mode axis when ``per_source`` is set.
        """
        if self.cert.dim != 2:
            raise ValueError("rasterization needs a planar system")
        ny, nx = shape
        xs = np.linspace(xlim[0], xlim[1], nx)
        ys = np.linspace(ylim[0], ylim[1], ny)
        masks = np.zeros((self.cert.num_modes, ny, nx), dtype=bool)
        dx = (xs[1] - xs[0]) if nx > 1 else 1.0
        dy = (ys[1] - ys[0]) if ny > 1 else 1.0
        for i, _, _, c, S in self.image_ellipses():
            half = np.sqrt(np.diag(S))
            c0 = max(0, int(np.floor((c[0] - half[0] - xs[0]) / dx)))
            c1 = min(nx - 1, int(np.ceil((c[0] + half[0] - xs[0]) / dx)))
            r0 = max(0, int(np.floor((c[1] - half[1] - ys[0]) / dy)))
            r1 = min(ny - 1, int(np.ceil((c[1] + half[1] - ys[0]) / dy)))
            if c0 > c1 or r0 > r1:
                continue
            X, Y = np.meshgrid(xs[c0:c1 + 1] - c[0], ys[r0:r1 + 1] - c[1])
            Q = np.linalg.inv(S)
            inside = Q[0, 0] * X * X + 2 * Q[0, 1] * X * Y + Q[1, 1] * Y * Y <= 1.0
            masks[i, r0:r1 + 1, c0:c1 + 1] |= inside
        return (masks if per_source else masks.any(axis=0)), xs, ys


def membership_V(system: SwitchedAffineSystem, cert: DwellCertificate, x: np.ndarray,
                 m: int = 200) -> MembershipResult:
    """Tests ``x`` against the bounding region with a time grid of ``m`` steps.

    A point belongs to ``V`` when, for some pair ``(i, j)`` and grid time ``t``,
    flowing it backward for time ``t`` under mode ``j`` lands in ``X_i``. The
    witness is ``(i, j, t)`` with 0-based mode indices.
    """
    return BoundingRegion(system, cert, m).membership(x)


def region_polylines(system: SwitchedAffineSystem, cert: DwellCertificate, *, m: int = 200,
                     shape: tuple[int, int] = (400, 400), ellipse_points: int = 361,
                     window: tuple[tuple[float, float], tuple[float, float]] | None = None):
    """Polylines for every ``X_i`` and ``V_i`` of a planar certificate.

    Returns:
        List of ``(set_id, points)`` with ids ``X1, X2, ...`` and ``V1, V2, ...``;
        a region with several boundary curves gets ids ``V1``, ``V1.2``, ...
    """
    from skimage import measure

    if cert.dim != 2:
        raise ValueError("region export needs a planar system")
    region = BoundingRegion(system, cert, m)
    out = []
    for i, ell in enumerate(cert.safety_sets()):
        pts = ell.boundary_points(ellipse_points - 1)
        out.append((f"X{i + 1}", np.vstack([pts, pts[:1]])))
    if window is None:
        lo, hi = region.bounding_box()
        pad = 0.05 * (hi - lo)
        window = ((lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1]))
    masks, xs, ys = region.rasterize(window[0], window[1], shape, per_source=True)
    for i in range(cert.num_modes):
        padded = np.pad(masks[i].astype(float), 1)
        for piece, contour in enumerate(measure.find_contours(padded, 0.5)):
            rows, cols = contour[:, 0] - 1, contour[:, 1] - 1
            px = np.interp(cols, np.arange(xs.size), xs)
            py = np.interp(rows, np.arange(ys.size), ys)
            name = f"V{i + 1}" if piece == 0 else f"V{i + 1}.{piece + 1}"
            out.append((name, np.stack([px, py], axis=1)))
    return out


def raster_area(system: SwitchedAffineSystem, cert: DwellCertificate,
                window: tuple[tuple[float, float], tuple[float, float]],
                shape: tuple[int, int] = (400, 400), m: int = 200) -> float:
    """Area of ``V`` by pixel count on a fixed grid."""
    mask, xs, ys = BoundingRegion(system, cert, m).rasterize(window[0], window[1], shape)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    return float(mask.sum()) * cell


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    tau: float
    feasible: bool
    R_X: float | None = None
    objective: float | None = None
    status: str = ""
    certificate: DwellCertificate | None = None


@dataclass
class TauSweep:
    rows: list[SweepRow]
    flags: list[str] = field(default_factory=list)


def tau_sweep(system: SwitchedAffineSystem, taus: Sequence[float], *, backend="clarabel") -> TauSweep:
    """Dwell-time feasibility, safety radius and objective for each ``tau``.

    Failures are recorded per row. An increase of ``R_X`` with ``tau`` is
    flagged, not raised, since the trace objective is only a proxy for size.
    """
    taus = [float(t) for t in taus]
    if any(t <= 0 for t in taus) or taus != sorted(taus):
        raise ValueError("tau list must be positive and ascending")
    rows = []
    for tau in taus:
        status = dwell_lmi_status(system, tau, backend=backend)
        if status != sdp.OPTIMAL:
            rows.append(SweepRow(tau, False, status=status))
            continue
        try:
            cert = safety_radius(dwell_certificate(system, tau, backend=backend), backend=backend)
        except (NumericFailure, CertificateInconsistency) as exc:
            rows.append(SweepRow(tau, True, status=f"numeric-failure: {exc}"))
            continue
        rows.append(SweepRow(tau, True, cert.R_X, cert.objective, sdp.OPTIMAL, cert))
    flags = []
    radii = [(r.tau, r.R_X) for r in rows if r.R_X is not None]
    for (t0, r0), (t1, r1) in zip(radii, radii[1:]):
        if r1 > r0 * (1 + 1e-6):
            flags.append(f"R_X increases from {r0:.6g} at tau={t0:g} to {r1:.6g} at tau={t1:g}")
    return TauSweep(rows, flags)
