"""Command-line front end: ``swinv <command> --system system.json ...``.

Exit codes: 0 success, 1 infeasible or verification violations,
2 usage or input errors, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import arbitrary, dwell, fileio, pathfollow, simulator
from .errors import (
    CertificateInconsistency,
    InfeasibleError,
    IterationLimitError,
    NumericFailure,
    StallError,
    SwinvError,
)
from .sets import EllipsoidSet, Polytope
from .system import SwitchedAffineSystem, SwitchingSignal

log = logging.getLogger("swinv")

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(SwinvError):
    """Bad flag values or unreadable input."""


# ---------------------------------------------------------------------------
# argument helpers


def _positive(kind=float):
    def parse(text: str):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text}")
        return value
    return parse


def _nonneg(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative value, got {text}")
    return value


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _report(args, name: str, payload: dict) -> Path:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in {"func", "verbose"}}
    body = {"schema": fileio.SCHEMA, "command": args.command, "parameters": params, **payload}
    return fileio.write_json(Path(args.out) / name, body)


def _load_certificate(path: str):
    data = fileio.read_json(path)
    kind = data.get("kind")
    if kind == "ellipsoid":
        return arbitrary.EllipsoidCertificate.from_dict(data)
    if kind == "sos":
        return arbitrary.SosCertificate.from_dict(data)
    if kind == "dwell":
        return dwell.DwellCertificate.from_dict(data)
    raise UsageError(f"{path}: unknown certificate kind {kind!r}")


def _mode_list(text: str, system: SwitchedAffineSystem) -> list[int]:
    modes = [int(v) - 1 for v in text.split(",")]
    if any(m < 0 or m >= system.num_modes for m in modes):
        raise UsageError(f"modes must be in 1..{system.num_modes}")
    return modes


def _polylines_out(args, stem: str, polylines) -> None:
    fileio.write_csv(Path(args.out) / f"{stem}.csv", ["set_id", "x", "y"], fileio.polylines_rows(polylines))
    if getattr(args, "svg", False):
        fileio.write_svg(Path(args.out) / f"{stem}.svg", polylines)


# ---------------------------------------------------------------------------
# commands


def cmd_invariant_ellipsoid(args, system):
    cert = arbitrary.ellipsoid_invariant(system, args.kappa, backend=args.backend)
    fileio.write_json(Path(args.out) / "ellipsoid.json", cert.to_dict())
    if system.dim == 2:
        pts = cert.ellipsoid.boundary_points(args.points)
        _polylines_out(args, "ellipsoid_level", [("K_Q", np.vstack([pts, pts[:1]]))])
    print(f"trace(S) = {np.trace(cert.S):.6g}  c = {cert.c.tolist()}  kappa = {cert.kappa:.6g}")
    return EXIT_OK


def cmd_invariant_sos(args, system):
    cert = arbitrary.sos_invariant(system, args.degree, args.beta, args.eps, backend=args.backend)
    fileio.write_json(Path(args.out) / "sos.json", cert.to_dict())
    if system.dim == 2:
        lo, hi = args.window
        grid = np.linspace(lo, hi, args.grid)
        fileio.write_csv(Path(args.out) / "sos_grid.csv", ["x", "y", "V"], arbitrary.level_set_grid(cert.V, grid, grid))
    print(f"r = {cert.r:.6g}  degree = {cert.degree}  beta = {cert.beta:g}")
    return EXIT_OK


def cmd_theoretic_radius(args, system):
    if args.certificate:
        cert = _load_certificate(args.certificate)
        if not isinstance(cert, arbitrary.EllipsoidCertificate):
            raise UsageError("theoretic-radius needs an ellipsoid certificate")
        kappa = args.kappa or cert.kappa
    else:
        cert = arbitrary.ellipsoid_invariant(system, args.kappa, backend=args.backend)
        kappa = cert.kappa
    R = arbitrary.theoretic_radius(system, cert.S, cert.c, kappa)
    _report(args, "theoretic_radius.json", {"R": R, "kappa": kappa, "c": cert.c, "S": cert.S})
    print(f"R = {R:.6g}")
    return EXIT_OK


def cmd_min_dwell(args, system):
    res = dwell.min_dwell_time(system, args.tol, tau_hi=args.tau_hi, backend=args.backend)
    _report(args, "min_dwell.json", {"tau_min": res.tau, "bracket": list(res.bracket),
                                     "evaluations": [[t, s] for t, s in res.evaluations]})
    print(f"tau_min = {res.tau:.6g}")
    return EXIT_OK


def _centers(args, system):
    if not getattr(args, "centers", None):
        return None
    data = fileio.read_json(args.centers)
    centers = [np.asarray(c, dtype=float) for c in (data["centers"] if isinstance(data, dict) else data)]
    if len(centers) != system.num_modes or any(c.shape != (system.dim,) for c in centers):
        raise UsageError("centers file must list one n-vector per mode")
    return centers


def cmd_dwell_cert(args, system):
    cert = dwell.dwell_certificate(system, args.tau, _centers(args, system), backend=args.backend)
    if args.radius:
        cert = dwell.safety_radius(cert, backend=args.backend)
    fileio.write_json(Path(args.out) / "dwell_cert.json", cert.to_dict())
    worst = float(dwell.schur_residuals(system, cert).max())
    print(f"objective = {cert.objective:.6g}  max Schur residual = {worst:.3e}"
          + (f"  R_X = {cert.R_X:.6g}" if cert.R_X is not None else ""))
    return EXIT_OK


def cmd_safety_radius(args, system):
    if args.certificate:
        cert = _load_certificate(args.certificate)
        if not isinstance(cert, dwell.DwellCertificate):
            raise UsageError("safety-radius needs a dwell certificate")
    elif args.tau:
        cert = dwell.dwell_certificate(system, args.tau, _centers(args, system), backend=args.backend)
    else:
        raise UsageError("give --certificate or --tau")
    cert = dwell.safety_radius(cert, backend=args.backend)
    fileio.write_json(Path(args.out) / "dwell_cert.json", cert.to_dict())
    if system.dim == 2:
        _polylines_out(args, "regions", dwell.region_polylines(system, cert, m=args.m, shape=(args.grid, args.grid)))
    print(f"R_X = {cert.R_X:.6g}")
    return EXIT_OK


def cmd_membership(args, system):
    cert = _load_certificate(args.certificate)
    if not isinstance(cert, dwell.DwellCertificate) or cert.R_X is None:
        raise UsageError("membership needs a dwell certificate with a safety radius")
    x = np.asarray(args.point, dtype=float)
    if x.shape != (system.dim,):
        raise UsageError(f"point must have {system.dim} coordinates")
    res = dwell.membership_V(system, cert, x, args.m)
    witness = None if res.witness is None else {"i": res.witness[0] + 1, "j": res.witness[1] + 1, "t": res.witness[2]}
    _report(args, "membership.json", {"inside": res.inside, "witness": witness, "value": res.value,
                                      "note": f"time grid of {args.m} steps; thin slivers between grid times can be missed"})
    print(("inside" if res.inside else "outside") + (f" witness {witness}" if witness else ""))
    return EXIT_OK


def cmd_path_follow(args, system):
    try:
        state = pathfollow.optimize_centers(system, args.tau, args.delta, args.eps_stop, args.max_iter,
                                            backend=args.backend)
    except IterationLimitError as exc:
        state = exc.partial
        log.error("%s", exc)
        _write_path(args, state)
        return EXIT_NUMERIC
    _write_path(args, state)
    print(f"iterations = {state.iteration}  objective {state.objectives[0]:.6g} -> {state.objectives[-1]:.6g}")
    for i, c in enumerate(state.cert.c):
        print(f"c{i + 1} = {c.tolist()}")
    return EXIT_OK


def _write_path(args, state):
    fileio.write_json(Path(args.out) / "path_follow.json", state.cert.to_dict())
    fileio.write_csv(Path(args.out) / "path_trace.csv", state.trace_header(), state.trace_rows())


def cmd_tau_sweep(args, system):
    sweep = dwell.tau_sweep(system, args.taus, backend=args.backend)
    rows = [[r.tau, int(r.feasible), r.R_X, r.objective, r.status] for r in sweep.rows]
    fileio.write_csv(Path(args.out) / "tau_sweep.csv", ["tau", "feasible", "R_X", "objective", "status"],
                     [[v if v is not None else "" for v in row] for row in rows])
    _report(args, "tau_sweep.json", {"rows": [dict(zip(["tau", "feasible", "R_X", "objective", "status"], r))
                                              for r in rows], "flags": sweep.flags})
    for row in rows:
        print("\t".join("" if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v)) for v in row))
    for flag in sweep.flags:
        print(f"flag: {flag}")
    return EXIT_OK


def _signal(args, system, k: int) -> SwitchingSignal:
    if args.signal == "constant":
        return SwitchingSignal.constant(_mode_list(args.mode, system)[0])
    if args.signal == "periodic":
        modes = _mode_list(args.mode, system)
        durations = args.durations or [max(args.tau, 1.0)] * len(modes)
        return simulator.cycle_signal(modes, durations, args.horizon)
    return simulator.random_dwell_signal(system.num_modes, args.horizon, args.tau, args.seed, k)


def cmd_simulate(args, system):
    x0 = np.zeros(system.dim) if args.x0 is None else np.asarray(args.x0, dtype=float)
    if x0.shape != (system.dim,):
        raise UsageError(f"x0 must have {system.dim} coordinates")
    width = len(str(args.n - 1))
    diverged = 0
    for k in range(args.n):
        traj = simulator.simulate(system, _signal(args, system, k), x0, args.horizon, args.dt)
        diverged += traj.diverged
        fileio.write_csv(Path(args.out) / f"traj_{k:0{width}d}.csv", traj.header(), traj.rows())
    print(f"wrote {args.n} trajectories" + (f" ({diverged} diverged)" if diverged else ""))
    return EXIT_OK


def cmd_reachable(args, system):
    pts = simulator.reachable_sample(system, args.t, args.n, args.seed, args.tau)
    fileio.write_csv(Path(args.out) / "reachable.csv", [f"x{k + 1}" for k in range(system.dim)], pts.tolist())
    payload = {"points": int(pts.shape[0])}
    code = EXIT_OK
    if args.certificate:
        cert = _load_certificate(args.certificate)
        inside = _contains_fn(cert)(pts, args.tol)
        payload["outside"] = int((~inside).sum())
        code = EXIT_OK if inside.all() else EXIT_INFEASIBLE
    _report(args, "reachable.json", payload)
    print(f"{pts.shape[0]} points" + (f", {payload['outside']} outside the certificate" if "outside" in payload else ""))
    return code


def _contains_fn(cert):
    if isinstance(cert, arbitrary.EllipsoidCertificate):
        return lambda x, tol=0.0: cert.ellipsoid.contains(x, tol)
    if isinstance(cert, arbitrary.SosCertificate):
        return lambda x, tol=0.0: cert.contains(x, tol)
    return lambda x, tol=0.0: cert.in_safety_set(x, tol)


def cmd_verify(args, system):
    cert = _load_certificate(args.certificate)
    rng = simulator._rng(args.seed, 10**6)
    if isinstance(cert, dwell.DwellCertificate):
        if cert.R_X is None:
            raise UsageError("dwell certificate has no safety radius")
        tau = cert.tau
        horizon = args.horizon or 50 * tau
        signals = [simulator.random_dwell_signal(system.num_modes, horizon, tau, args.seed, k) for k in range(args.n)]
        starts = cert.safety_sets()[0].scaled(args.spread * cert.R_X).interior_points(args.n, rng)
        rep = simulator.verify_ugub(system, cert, signals, starts, horizon, dt=args.dt, m=args.m, tol=args.tol)
        inv_starts = np.vstack([s.boundary_points(args.n // system.num_modes + 1, rng)
                                for s in cert.safety_sets()])[:args.n]
        switch = _switching_invariance(system, cert, signals, inv_starts, horizon, args.tol)
        _report(args, "verify.json", {"ugub": rep.to_dict(), "switching_invariance": switch})
        ok = rep.exits == 0 and switch["violations"] == 0
        print(f"UGUB: entered {rep.entered}/{len(rep.records)}, post-entry exits {rep.exits}; "
              f"switching-instant violations {switch['violations']}")
        return EXIT_OK if ok else EXIT_INFEASIBLE
    horizon = args.horizon or 20.0
    signals = [simulator.random_dwell_signal(system.num_modes, horizon, 0.0, args.seed, k) for k in range(args.n)]
    if isinstance(cert, arbitrary.EllipsoidCertificate):
        starts = cert.ellipsoid.boundary_points(args.n, rng)
        distance = cert.ellipsoid.distance
    else:
        center = np.mean(simulator.reachable_sample(system, 30.0, 64, args.seed), axis=0)
        starts = cert.boundary_points(args.n, center, rng)
        distance = None
    rep = simulator.verify_invariance(_contains_fn(cert), system, signals, starts, horizon,
                                      dt=args.dt, tol=args.tol, distance=distance)
    _report(args, "verify.json", {"invariance": rep.to_dict()})
    print(f"invariance: {rep.tested} trajectories, {rep.violations} violations")
    return EXIT_OK if rep.ok else EXIT_INFEASIBLE


def _switching_invariance(system, cert, signals, starts, horizon, tol) -> dict:
    """Counts switching instants at which solutions started in X are outside X."""
    violations, checked = 0, 0
    for sig, x0 in zip(signals, starts):
        x = x0
        t_prev = 0.0
        for t in sig.switch_times(horizon):
            x = simulator.flow(system, sig.shifted(t_prev), x, t - t_prev)
            t_prev = t
            checked += 1
            violations += int(not cert.in_safety_set(x, tol)[0])
    return {"instants": checked, "violations": violations}


def cmd_nagumo(args, system):
    if args.certificate:
        cert = _load_certificate(args.certificate)
        if not isinstance(cert, arbitrary.EllipsoidCertificate):
            raise UsageError("nagumo needs an ellipsoid certificate or a polytope")
        shape = cert.ellipsoid
        pts = shape.boundary_points(args.samples, simulator._rng(args.seed))
    elif args.polytope:
        data = fileio.read_json(args.polytope)
        shape = Polytope(data["H"], data["h"])
        pts = _polytope_boundary(shape, args.samples, simulator._rng(args.seed))
    else:
        raise UsageError("give --certificate or --polytope")
    rep = simulator.nagumo_check(shape, system, pts)
    _report(args, "nagumo.json", rep.to_dict())
    for i, (v, k) in enumerate(zip(rep.max_inner, rep.outward)):
        print(f"mode {i + 1}: max normal component {v:.3e}, outward at {k}/{rep.samples} samples")
    return EXIT_OK if rep.consistent() else EXIT_INFEASIBLE


def _polytope_boundary(poly: Polytope, num: int, rng) -> np.ndarray:
    """Samples on bounded facets of a polytope, by projecting random facet points."""
    from scipy.optimize import linprog

    H, h = poly.H, poly.h
    out = []
    per = max(1, num // H.shape[0])
    for k in range(H.shape[0]):
        lo, hi = [], []
        for sgn in (1.0, -1.0):
            for dim in range(H.shape[1]):
                cost = np.zeros(H.shape[1])
                cost[dim] = sgn
                res = linprog(cost, A_ub=H, b_ub=h, A_eq=H[k:k + 1], b_eq=h[k:k + 1], bounds=(None, None))
                if res.status == 0:
                    (lo if sgn > 0 else hi).append(res.x)
        verts = np.array(lo + hi)
        if verts.size == 0:
            continue
        w = rng.dirichlet(np.ones(len(verts)), per)
        out.append(w @ verts)
    return np.vstack(out)[:num] if out else np.zeros((0, H.shape[1]))


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swinv", description="Invariant and bounding sets of switched affine systems.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, system=True):
        p = sub.add_parser(name, help=help_text)
        if system:
            p.add_argument("--system", required=True, help="system JSON")
        p.add_argument("-o", "--out", default=".", help="output directory")
        p.add_argument("--backend", choices=["clarabel", "cvxopt"], default="clarabel")
        p.set_defaults(func=func)
        return p

    p = add("invariant-ellipsoid", cmd_invariant_ellipsoid, "trace-minimal invariant ellipsoid")
    p.add_argument("--kappa", type=_positive(), default=None)
    p.add_argument("--points", type=_positive(int), default=361)
    p.add_argument("--svg", action="store_true")

    p = add("invariant-sos", cmd_invariant_sos, "polynomial invariant set")
    p.add_argument("--degree", type=_positive(int), default=12)
    p.add_argument("--beta", type=_nonneg, default=1.0)
    p.add_argument("--eps", type=_positive(), default=1e-2)
    p.add_argument("--grid", type=_positive(int), default=201)
    p.add_argument("--window", type=_floats, default=[-2.0, 2.0])

    p = add("theoretic-radius", cmd_theoretic_radius, "invariant ball radius B_max / kappa")
    p.add_argument("--kappa", type=_positive(), default=None)
    p.add_argument("--certificate")

    p = add("min-dwell", cmd_min_dwell, "quadratic minimum dwell time by bisection")
    p.add_argument("--tol", type=_positive(), default=0.01)
    p.add_argument("--tau-hi", type=_positive(), default=1.0)

    p = add("dwell-cert", cmd_dwell_cert, "coupled dwell-time LMIs at fixed centers")
    p.add_argument("--tau", type=_positive(), required=True)
    p.add_argument("--centers", help="JSON list of per-mode centers")
    p.add_argument("--radius", action="store_true", help="also compute the safety radius")

    p = add("safety-radius", cmd_safety_radius, "safety radius and region polylines")
    p.add_argument("--certificate")
    p.add_argument("--tau", type=_positive())
    p.add_argument("--centers")
    p.add_argument("--m", type=_positive(int), default=200)
    p.add_argument("--grid", type=_positive(int), default=400)
    p.add_argument("--svg", action="store_true")

    p = add("membership", cmd_membership, "membership in the bounding region")
    p.add_argument("--certificate", required=True)
    p.add_argument("--point", type=_floats, required=True)
    p.add_argument("--m", type=_positive(int), default=200)

    p = add("path-follow", cmd_path_follow, "optimize the norm centers")
    p.add_argument("--tau", type=_positive(), required=True)
    p.add_argument("--delta", type=_positive(), default=0.1)
    p.add_argument("--eps-stop", type=_positive(), default=1e-3)
    p.add_argument("--max-iter", type=_positive(int), default=200)

    p = add("tau-sweep", cmd_tau_sweep, "pipeline over a list of dwell times")
    p.add_argument("--taus", type=_floats, required=True)

    p = add("simulate", cmd_simulate, "write trajectory CSVs")
    p.add_argument("--signal", choices=["random", "constant", "periodic"], default="random")
    p.add_argument("--tau", type=_nonneg, default=0.0)
    p.add_argument("--mode", default="1", help="mode(s), 1-based, comma-separated for periodic")
    p.add_argument("--durations", type=_floats, default=None)
    p.add_argument("--n", type=_positive(int), default=1)
    p.add_argument("--horizon", type=_positive(), default=20.0)
    p.add_argument("--dt", type=_positive(), default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", type=_floats, default=None)

    p = add("reachable", cmd_reachable, "sample the reachable set from the origin")
    p.add_argument("--t", type=_nonneg, required=True)
    p.add_argument("--n", type=_positive(int), default=1000)
    p.add_argument("--tau", type=_nonneg, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--certificate")
    p.add_argument("--tol", type=_nonneg, default=1e-6)

    p = add("verify", cmd_verify, "Monte-Carlo invariance or ultimate-boundedness check")
    p.add_argument("--certificate", required=True)
    p.add_argument("--n", type=_positive(int), default=1000)
    p.add_argument("--horizon", type=_positive(), default=None)
    p.add_argument("--dt", type=_positive(), default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=_nonneg, default=1e-6)
    p.add_argument("--m", type=_positive(int), default=200)
    p.add_argument("--spread", type=_positive(), default=10.0, help="initial states within this many safety radii")

    p = add("nagumo", cmd_nagumo, "sign of the field's normal component on a set boundary")
    p.add_argument("--certificate")
    p.add_argument("--polytope", help='JSON {"H": ..., "h": ...}')
    p.add_argument("--samples", type=_positive(int), default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        system = fileio.load_system(args.system)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return args.func(args, system)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericFailure, CertificateInconsistency, StallError, IterationLimitError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, SwinvError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
