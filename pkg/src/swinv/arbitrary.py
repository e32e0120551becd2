"""Invariant sets under arbitrary switching.

Two certificate families are provided:

* Ellipsoids ``K_Q = {(x - c)' S^{-1} (x - c) <= 1}`` from the LMIs
  ``S A_i' + A_i S <= -2 kappa S`` and ``[[kappa^2, g_i'], [g_i, S]] >= 0`` with
  ``g_i = A_i c + b_i``, minimizing ``trace(S)``.
* Polynomial sublevel sets ``K_SOS = {V <= r}`` where ``V - eps sum_j x_j^d``
  and ``-grad V . (A_i x + b_i) - beta (V - r)`` are sums of squares,
  minimizing ``r``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import sdp
from .errors import CertificateInconsistency, InfeasibleError, NumericFailure
from .numerics import symmetrize
from .poly import Polynomial, gram_map, lie_derivative_map, monomials
from .sets import EllipsoidSet
from .system import SwitchedAffineSystem, filippov_equilibria, spectral_abscissa

log = logging.getLogger(__name__)

STRICT_MARGIN = 1e-7


@dataclass(frozen=True)
class EllipsoidCertificate:
    """Solution of the ellipsoid LMIs at a fixed decay rate.

    Attributes:
        ellipsoid: The invariant set ``K_Q``.
        kappa: Decay rate used in the LMIs.
        report: Raw solver report.
    """

    ellipsoid: EllipsoidSet
    kappa: float
    report: sdp.SolverReport | None = None

    @property
    def S(self) -> np.ndarray:
        return self.ellipsoid.shape

    @property
    def c(self) -> np.ndarray:
        return self.ellipsoid.center

    def to_dict(self) -> dict:
        return {"schema": "swinv/1", "kind": "ellipsoid", "kappa": self.kappa,
                "c": self.c.tolist(), "S": self.S.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "EllipsoidCertificate":
        if data.get("kind", "ellipsoid") != "ellipsoid":
            raise ValueError(f"expected an ellipsoid certificate, got {data.get('kind')!r}")
        return cls(EllipsoidSet(data["c"], data["S"]), float(data.get("kappa", math.nan)))


def _decay_lmis(prog: sdp.ConeProgram, system: SwitchedAffineSystem, S: sdp.Affine,
                kappa: float, margin: float) -> None:
    for i, mode in enumerate(system.modes):
        A = mode.A
        lyap = S @ A.T + A @ S + 2.0 * kappa * S
        prog.add_lmi(-lyap, margin=margin, name=f"decay[{i + 1}]")


def ellipsoid_invariant(system: SwitchedAffineSystem, kappa: float | None = None, *,
                        backend="clarabel", margin: float = STRICT_MARGIN) -> EllipsoidCertificate:
    """Trace-minimal invariant ellipsoid at decay rate ``kappa``.

    Args:
        system: Switched affine system.
        kappa: Decay rate. Defaults to 0.9 times :func:`max_quadratic_decay`.
        backend: SDP backend name or adapter.
        margin: Strictness margin applied to every LMI block.

    Raises:
        InfeasibleError: No common quadratic certificate exists at ``kappa``.
        NumericFailure: The solver did not return a verified point.
    """
    if kappa is None:
        kappa = 0.9 * max_quadratic_decay(system, backend=backend)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    n = system.dim
    prog = sdp.ConeProgram("ellipsoid")
    S = prog.symmetric("S", n)
    c = prog.vector("c", n)
    _decay_lmis(prog, system, S, kappa, margin)
    for i, mode in enumerate(system.modes):
        g = c.left_mul(mode.A) + mode.b
        block = sdp.bmat([[np.array([[kappa**2]]), g.T], [g, S]])
        prog.add_lmi(block, margin=margin, name=f"offset[{i + 1}]")
    prog.minimize(S.trace())
    rep = sdp.solve(prog, backend=backend)
    if rep.status == sdp.INFEASIBLE:
        raise InfeasibleError(f"no invariant ellipsoid at kappa={kappa:g}")
    if not rep.ok:
        raise NumericFailure(f"ellipsoid LMI solve failed ({rep.solver_status})")
    return EllipsoidCertificate(EllipsoidSet(rep["c"], symmetrize(rep["S"])), float(kappa), rep)


def quadratic_decay_feasible(system: SwitchedAffineSystem, kappa: float, *, backend="clarabel",
                             margin: float = 1e-6) -> str:
    """Status of the common decay LMI alone (normalized by ``S >= I``)."""
    prog = sdp.ConeProgram("decay")
    S = prog.symmetric("S", system.dim)
    prog.add_lmi(S - np.eye(system.dim), name="normalization")
    _decay_lmis(prog, system, S, kappa, margin)
    return sdp.solve(prog, backend=backend, rescale=False).status


def max_quadratic_decay(system: SwitchedAffineSystem, tol: float = 1e-4, *, backend="clarabel") -> float:
    """Largest common quadratic decay rate, by bisection.

    The bracket is ``[0, min_i |spectral abscissa(A_i)|]``. Solver failures
    count as infeasible so the returned value stays certified.

    Raises:
        InfeasibleError: No common quadratic Lyapunov function exists.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    alphas = [spectral_abscissa(m.A) for m in system.modes]
    if max(alphas) >= 0:
        raise InfeasibleError("a mode is not Hurwitz; no common quadratic Lyapunov function")
    hi = min(-a for a in alphas)
    lo = min(tol, 0.5 * hi)
    if quadratic_decay_feasible(system, lo, backend=backend) != sdp.OPTIMAL:
        raise InfeasibleError("no common quadratic Lyapunov function (infeasible as kappa -> 0+)")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if quadratic_decay_feasible(system, mid, backend=backend) == sdp.OPTIMAL:
            lo = mid
        else:
            hi = mid
    return lo


def theoretic_radius(system: SwitchedAffineSystem, S: np.ndarray, c: np.ndarray, kappa: float,
                     check: bool = True) -> float:
    """Radius ``R = B_max / kappa`` of an invariant ball in the norm ``v``.

    ``v(y) = sqrt(y' S^{-1} y)`` and ``B_max = max_i v(A_i c + b_i)``. The set
    ``{v(x - c) <= R}`` is forward invariant when ``S`` satisfies the decay LMI
    at rate ``kappa``.

    Raises:
        ValueError: If ``check`` is set and the decay LMI fails at ``kappa``.
    """
    S = symmetrize(np.asarray(S, dtype=float))
    c = np.asarray(c, dtype=float)
    if check:
        for mode in system.modes:
            lyap = S @ mode.A.T + mode.A @ S + 2.0 * kappa * S
            top = np.linalg.eigvalsh(symmetrize(lyap))[-1]
            if top > 1e-6 * (1.0 + np.linalg.norm(lyap, 2)):
                raise ValueError(f"S does not certify decay rate {kappa:g} (eigenvalue {top:.3e})")
    Sinv = np.linalg.inv(S)
    bmax = 0.0
    for mode in system.modes:
        g = mode.A @ c + mode.b
        bmax = max(bmax, math.sqrt(max(float(g @ Sinv @ g), 0.0)))
    return bmax / kappa


# ---------------------------------------------------------------------------
# Sum-of-squares certificates


@dataclass(frozen=True)
class SosCertificate:
    """Polynomial invariant set ``{V <= r}`` with its Gram matrices.

    Attributes:
        V: Certificate polynomial of total degree ``degree``.
        r: Level of the invariant sublevel set.
        beta: Multiplier in the decrease condition.
        eps: Positivity margin.
        degree: Even total degree ``d``.
        basis: Exponents of the Gram basis (degree up to ``d/2``).
        grams: Gram matrices: positivity constraint first, then one per mode.
    """

    V: Polynomial
    r: float
    beta: float
    eps: float
    degree: int
    basis: np.ndarray | None = None
    grams: tuple[np.ndarray, ...] = ()
    report: sdp.SolverReport | None = None

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.V(x) <= self.r + tol * (1.0 + abs(self.r))

    def boundary_points(self, num: int, center: np.ndarray, rng: np.random.Generator,
                        reach: float = 1e3, steps: int = 400) -> np.ndarray:
        """Points where rays from ``center`` first leave ``{V <= r}``.

        Each ray is scanned on a geometric grid up to ``reach`` and the
        crossing refined by bisection; the returned points lie in the set.
        """
        center = np.asarray(center, dtype=float).reshape(-1)
        if not self.contains(center[None, :])[0]:
            raise ValueError("ray origin must lie inside the set")
        n = center.size
        u = rng.standard_normal((num, n)) if n > 2 else None
        if u is None:
            th = rng.uniform(0.0, 2 * np.pi, num)
            u = np.stack([np.cos(th), np.sin(th)], axis=1)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        radii = np.concatenate([[0.0], np.geomspace(1e-8, reach, steps)])
        pts = center + radii[None, :, None] * u[:, None, :]
        inside = self.contains(pts.reshape(-1, n)).reshape(num, radii.size)
        if inside.all(axis=1).any():
            raise ValueError("set extends beyond the scan reach")
        hi = np.argmax(~inside, axis=1)
        a, b = radii[hi - 1], radii[hi]
        for _ in range(60):
            mid = 0.5 * (a + b)
            ok = self.contains(center + mid[:, None] * u)
            a = np.where(ok, mid, a)
            b = np.where(ok, b, mid)
        return center + a[:, None] * u

    def constraint_polynomials(self, system: SwitchedAffineSystem) -> list[np.ndarray]:
        """Coefficients (over the full monomial list) that must be SOS."""
        full = monomials(system.dim, self.degree)
        coeffs = _coefficients_on(self.V, full)
        out = [coeffs.copy()]
        for j in range(system.dim):
            e = np.zeros(system.dim, dtype=int)
            e[j] = self.degree
            out[0][_row_of(full, e)] -= self.eps
        for mode in system.modes:
            L = lie_derivative_map(full, mode.A, mode.b)
            p = -(L @ coeffs) - self.beta * coeffs
            p[_row_of(full, np.zeros(system.dim, dtype=int))] += self.beta * self.r
            out.append(p)
        return out

    def reconstruction_error(self, system: SwitchedAffineSystem) -> float:
        """Largest coefficient mismatch between each constraint and its Gram form."""
        if self.basis is None or not self.grams:
            raise CertificateInconsistency("certificate carries no Gram matrices")
        full = monomials(system.dim, self.degree)
        G = gram_map(self.basis, full)
        err = 0.0
        for p, Q in zip(self.constraint_polynomials(system), self.grams):
            err = max(err, float(np.max(np.abs(G @ Q.ravel() - p))))
        return err

    def gram_min_eigenvalues(self) -> list[float]:
        return [float(np.linalg.eigvalsh(symmetrize(Q))[0]) for Q in self.grams]

    def to_dict(self) -> dict:
        out = {"schema": "swinv/1", "kind": "sos", "n": self.V.nvars, "d": self.degree,
               "beta": self.beta, "eps": self.eps, "r": self.r,
               "exponents": self.V.exponents.tolist(), "coefficients": self.V.coeffs.tolist()}
        if self.basis is not None:
            out["gram_basis"] = self.basis.tolist()
            out["grams"] = [Q.tolist() for Q in self.grams]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SosCertificate":
        if data.get("kind") != "sos":
            raise ValueError(f"expected an SOS certificate, got {data.get('kind')!r}")
        basis = np.array(data["gram_basis"], dtype=int) if "gram_basis" in data else None
        grams = tuple(np.array(Q, dtype=float) for Q in data.get("grams", []))
        return cls(Polynomial(np.array(data["exponents"]), np.array(data["coefficients"])),
                   float(data["r"]), float(data["beta"]), float(data["eps"]), int(data["d"]),
                   basis, grams)


def _row_of(full: np.ndarray, e: np.ndarray) -> int:
    return int(np.flatnonzero(np.all(full == e, axis=1))[0])


def _coefficients_on(V: Polynomial, full: np.ndarray) -> np.ndarray:
    out = np.zeros(full.shape[0])
    for e, c in zip(V.exponents, V.coeffs):
        out[_row_of(full, e)] += c
    return out


def sos_invariant(system: SwitchedAffineSystem, degree: int, beta: float, eps: float, *,
                  backend="clarabel") -> SosCertificate:
    """Minimizes ``r`` over polynomial certificates of total degree ``degree``.

    Both conditions are compiled to PSD Gram matrices over all monomials of
    degree at most ``degree/2``.

    Raises:
        InfeasibleError: No certificate at ``(degree, beta)``.
        NumericFailure: The solver did not return a verified point.
    """
    if degree < 2 or degree % 2:
        raise ValueError("degree must be even and at least 2")
    if beta < 0 or eps <= 0:
        raise ValueError("need beta >= 0 and eps > 0")
    n = system.dim
    full = monomials(n, degree)
    half = monomials(n, degree // 2)
    G = gram_map(half, full)
    m = half.shape[0]
    prog = sdp.ConeProgram("sos")
    v = prog.vector("V", full.shape[0])
    r = prog.scalar("r")
    pure = np.zeros(full.shape[0])
    for j in range(n):
        e = np.zeros(n, dtype=int)
        e[j] = degree
        pure[_row_of(full, e)] = eps
    unit = np.zeros(full.shape[0])
    unit[_row_of(full, np.zeros(n, dtype=int))] = 1.0
    Q0 = prog.symmetric("Q0", m)
    prog.add_lmi(Q0, name="gram[positivity]")
    prog.add_equality(Q0.vec().left_mul(G) - (v - pure), name="match[positivity]")
    for i, mode in enumerate(system.modes):
        L = lie_derivative_map(full, mode.A, mode.b)
        Qi = prog.symmetric(f"Q{i + 1}", m)
        prog.add_lmi(Qi, name=f"gram[decrease {i + 1}]")
        target = -(v.left_mul(L)) - beta * v + r * (beta * unit)
        prog.add_equality(Qi.vec().left_mul(G) - target, name=f"match[decrease {i + 1}]")
    prog.minimize(r)
    rep = sdp.solve(prog, backend=backend, rescale=False)
    if rep.status == sdp.INFEASIBLE:
        raise InfeasibleError(f"no SOS certificate at degree {degree}, beta {beta:g}")
    if not rep.ok:
        raise NumericFailure(f"SOS solve failed ({rep.solver_status})")
    grams = tuple(symmetrize(rep[f"Q{k}"]) for k in range(system.num_modes + 1))
    V = Polynomial(full, rep["V"])
    return SosCertificate(V, float(rep["r"]), float(beta), float(eps), int(degree), half, grams, rep)


@dataclass
class BetaSearch:
    """Profile of the SOS level over a grid of multipliers."""

    beta: float
    r: float
    certificate: SosCertificate
    profile: list[tuple[float, float | None, str]] = field(default_factory=list)
    unimodal: bool = True


def sos_beta_search(system: SwitchedAffineSystem, degree: int, eps: float, betas: Sequence[float], *,
                    backend="clarabel") -> BetaSearch:
    """Runs :func:`sos_invariant` over a grid and keeps the smallest level.

    Non-unimodal profiles are flagged in the result, not assumed away.

    Raises:
        InfeasibleError: Every grid value fails.
    """
    betas = sorted(float(b) for b in betas)
    if not betas:
        raise ValueError("beta grid is empty")
    profile, best = [], None
    for beta in betas:
        try:
            cert = sos_invariant(system, degree, beta, eps, backend=backend)
        except InfeasibleError:
            profile.append((beta, None, sdp.INFEASIBLE))
            continue
        except NumericFailure:
            profile.append((beta, None, sdp.NUMERIC_FAILURE))
            continue
        profile.append((beta, cert.r, sdp.OPTIMAL))
        if best is None or cert.r < best.r:
            best = cert
    if best is None:
        raise InfeasibleError("every beta in the grid failed")
    rs = [r for _, r, _ in profile if r is not None]
    local_min = sum(
        1 for k in range(len(rs))
        if (k == 0 or rs[k] < rs[k - 1]) and (k == len(rs) - 1 or rs[k] < rs[k + 1])
    )
    return BetaSearch(best.beta, best.r, best, profile, unimodal=local_min <= 1)


def homogeneous_decay(cert: SosCertificate, system: SwitchedAffineSystem | None = None,
                      samples: int = 2000, seed: int = 0) -> float:
    """Certified decay rate ``beta / d`` of the linearized dynamics.

    When ``system`` is given, the top-degree part ``V_H`` is checked on random
    unit vectors: ``grad V_H(x) . A_i x <= -beta V_H(x)``.

    Raises:
        CertificateInconsistency: A sampled point violates the inequality.
    """
    kappa = cert.beta / cert.degree
    if system is None:
        return kappa
    VH = cert.V.homogeneous_part(cert.degree)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, system.dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    vals = VH(x)
    grads = VH.gradient(x)
    if np.any(vals <= 0):
        raise CertificateInconsistency("top-degree part of V is not positive on the unit sphere")
    for i, mode in enumerate(system.modes):
        lhs = np.einsum("ij,ij->i", grads, x @ mode.A.T)
        slack = lhs + cert.beta * vals
        scale = np.abs(lhs) + cert.beta * np.abs(vals)
        bad = slack > 1e-6 * scale + 1e-10
        if np.any(bad):
            k = int(np.argmax(slack))
            raise CertificateInconsistency(
                f"homogeneous decay violated for mode {i + 1} at {x[k].tolist()} (slack {slack[k]:.3e})"
            )
    return kappa


def filippov_containment(system: SwitchedAffineSystem, contains, resolution: int = 20) -> tuple[int, int]:
    """Counts sampled Filippov equilibria outside a set; returns (outside, total)."""
    pts = filippov_equilibria(system, resolution).points
    inside = np.asarray(contains(pts), dtype=bool)
    return int((~inside).sum()), int(pts.shape[0])


def level_set_grid(V, xs: np.ndarray, ys: np.ndarray) -> list[tuple[float, float, float]]:
    """Rows ``(x, y, V(x, y))`` over a rectangular grid, for plotting."""
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    vals = V(pts)
    return [(float(a), float(b), float(c)) for (a, b), c in zip(pts, vals)]
