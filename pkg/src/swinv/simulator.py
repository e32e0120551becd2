"""Exact simulation of switched affine systems and Monte-Carlo verification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .numerics import augmented_exponential
from .system import SwitchedAffineSystem, SwitchingSignal

MIN_GAP = 1e-6
DIVERGENCE = 1e6


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; ``stream`` selects an independent substream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


class _Propagator:
    """Caches augmented exponentials per (mode, step)."""

    def __init__(self, system: SwitchedAffineSystem):
        self.system = system
        self._get = lru_cache(maxsize=4096)(self._compute)
        self._powers: dict[tuple[int, float], np.ndarray] = {}

    def _compute(self, mode: int, h: float) -> np.ndarray:
        return augmented_exponential(self.system[mode], h)

    def __call__(self, mode: int, h: float) -> np.ndarray:
        return self._get(mode, float(h))

    def step(self, x: np.ndarray, mode: int, h: float) -> np.ndarray:
        if h == 0.0:
            return x
        F = self(mode, h)
        n = x.shape[-1]
        return x @ F[:n, :n].T + F[:n, n]

    def powers(self, mode: int, h: float, count: int) -> np.ndarray:
        """``exp(calA h)^k`` for ``k = 1..count``, extended on demand."""
        key = (mode, float(h))
        have = self._powers.get(key)
        if have is None or have.shape[0] < count:
            F = self(mode, h)
            size = max(count, 2 * (0 if have is None else have.shape[0]), 16)
            out = np.empty((size,) + F.shape)
            out[0] = F
            for k in range(1, size):
                out[k] = F @ out[k - 1]
            self._powers[key] = have = out
        return have[:count]


def flow(system: SwitchedAffineSystem, signal: SwitchingSignal, x0: np.ndarray, t: float) -> np.ndarray:
    """State at time ``t`` from ``x0`` (rows of ``x0`` are propagated independently)."""
    if t < 0:
        raise ValueError("flow is defined for t >= 0")
    x = np.asarray(x0, dtype=float)
    prop = _Propagator(system)
    for a, b, mode in signal.pieces(t):
        if mode >= system.num_modes:
            raise ValueError(f"signal selects mode {mode + 1} but the system has {system.num_modes}")
        x = prop.step(x, mode, b - a)
    return x


@dataclass
class Trajectory:
    """Samples of one solution.

    Attributes:
        times: Ascending sample times, including every switching instant.
        states: State per sample, shape ``(len(times), n)``.
        modes: Mode active at each sample (right-continuous).
        signal: The generating signal.
        switch_index: Sample indices of the switching instants.
        diverged: Integration stopped because the norm exceeded the cutoff.
    """

    times: np.ndarray
    states: np.ndarray
    modes: np.ndarray
    signal: SwitchingSignal
    switch_index: np.ndarray
    diverged: bool = False

    def rows(self) -> list[list[float]]:
        return [[float(t)] + [float(v) for v in x] + [int(m) + 1]
                for t, x, m in zip(self.times, self.states, self.modes)]

    def header(self) -> list[str]:
        return ["t"] + [f"x{k + 1}" for k in range(self.states.shape[1])] + ["mode"]


def simulate(system: SwitchedAffineSystem, signal: SwitchingSignal, x0: np.ndarray, horizon: float,
             dt: float = 0.01, *, divergence: float = DIVERGENCE, prop: _Propagator | None = None) -> Trajectory:
    """Samples the solution on a uniform grid plus every switching instant.

    Integration stops early once ``|x| > divergence * (1 + |x0|)``.
    """
    if horizon < 0 or dt <= 0:
        raise ValueError("need horizon >= 0 and dt > 0")
    prop = prop or _Propagator(system)
    x = np.asarray(x0, dtype=float).reshape(-1)
    limit = divergence * (1.0 + np.linalg.norm(x))
    n = x.size
    times, states, modes, switches = [np.zeros(1)], [x[None, :].copy()], [np.array([signal.mode_at(0.0)])], []
    count = 1
    diverged = False
    for a, b, mode in signal.pieces(horizon):
        if a > 0.0:
            switches.append(count - 1)
            modes[-1][-1] = mode
        if b <= a:
            continue
        k0 = math.floor(a / dt) + 1
        grid = np.arange(k0, math.ceil(b / dt) + 1) * dt
        grid = grid[(grid > a) & (grid < b - 1e-12 * max(1.0, b))]
        if grid.size:
            xi = np.append(prop.step(x, mode, grid[0] - a), 1.0)
            seg = np.vstack([xi[:n], (prop.powers(mode, dt, grid.size - 1) @ xi)[:, :n]])
            # exact step from the last grid point onto the switching instant
            seg_t = np.append(grid, b)
            seg = np.vstack([seg, prop.step(seg[-1], mode, b - grid[-1])])
        else:
            seg_t = np.array([b])
            seg = prop.step(x, mode, b - a)[None, :]
        norms = np.linalg.norm(seg, axis=1)
        bad = ~np.isfinite(norms) | (norms > limit)
        if bad.any():
            stop = int(np.argmax(bad)) + 1
            seg, seg_t = seg[:stop], seg_t[:stop]
            diverged = True
        times.append(seg_t)
        states.append(seg)
        modes.append(np.full(seg_t.size, mode))
        count += seg_t.size
        x = seg[-1]
        if diverged:
            break
    return Trajectory(np.concatenate(times), np.vstack(states), np.concatenate(modes), signal,
                      np.array(switches, dtype=int), diverged)


def random_dwell_signal(num_modes: int, horizon: float, tau: float, seed: int, stream: int = 0) -> SwitchingSignal:
    """Random signal with every gap at least ``tau``.

    Gaps are ``tau + Exponential(mean tau)``; for ``tau = 0`` the exponential
    mean is one and gaps are at least ``MIN_GAP``. The next mode is uniform
    over the other modes.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    rng = _rng(seed, stream)
    mode = int(rng.integers(num_modes))
    if num_modes == 1:
        return SwitchingSignal.constant(0)
    times, vals = [0.0], [mode]
    mean = tau if tau > 0 else 1.0
    t = 0.0
    while True:
        t += max(tau + rng.exponential(mean), tau, MIN_GAP)
        if t >= horizon:
            break
        mode = (mode + 1 + int(rng.integers(num_modes - 1))) % num_modes
        times.append(t)
        vals.append(mode)
    return SwitchingSignal(tuple(times), tuple(vals), dwell=tau if tau > 0 else None)


def reachable_sample(system: SwitchedAffineSystem, t: float, num: int, seed: int = 0,
                     tau: float = 0.0) -> np.ndarray:
    """End points of ``num`` random solutions from the origin at time ``t``."""
    if num < 1:
        raise ValueError("need at least one sample")
    prop = _Propagator(system)
    out = np.zeros((num, system.dim))
    for k in range(num):
        sig = random_dwell_signal(system.num_modes, t, tau, seed, k)
        x = np.zeros(system.dim)
        for a, b, mode in sig.pieces(t):
            x = prop.step(x, mode, b - a)
        out[k] = x
    return out


# ---------------------------------------------------------------------------
# oracles


def rk4_flow(system: SwitchedAffineSystem, signal: SwitchingSignal, x0: np.ndarray, t: float,
             dt: float = 1e-5) -> np.ndarray:
    """Classical fourth-order Runge-Kutta with fixed step ``dt``.

    For an affine field one RK4 step is multiplication of the augmented
    state by the degree-four Taylor polynomial of ``h * calA``; ``K`` steps
    are evaluated as a matrix power, which is the same arithmetic result
    without a Python loop per step.
    """
    xi = np.append(np.asarray(x0, dtype=float).reshape(-1), 1.0)
    for a, b, mode in signal.pieces(t):
        Aa = system[mode].augmented()
        span = b - a
        K = int(math.floor(span / dt + 1e-9))
        for h, count in ((dt, K), (span - K * dt, 1)):
            if count == 0 or h <= 1e-15:
                continue
            Z = h * Aa
            Z2 = Z @ Z
            T = np.eye(Aa.shape[0]) + Z + Z2 / 2 + Z2 @ Z / 6 + Z2 @ Z2 / 24
            xi = np.linalg.matrix_power(T, count) @ xi
    return xi[:-1]


# ---------------------------------------------------------------------------
# verification


@dataclass
class Witness:
    trajectory: int
    time: float
    state: list[float]
    detail: str = ""


@dataclass
class InvarianceReport:
    tested: int = 0
    samples: int = 0
    violations: int = 0
    violating_trajectories: int = 0
    max_excursion: float = 0.0
    witnesses: list[Witness] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "tested": self.tested,
            "samples": self.samples,
            "violations": self.violations,
            "violating_trajectories": self.violating_trajectories,
            "max_excursion": self.max_excursion,
            "witnesses": [w.__dict__ for w in self.witnesses],
        }


def verify_invariance(contains: Callable[[np.ndarray, float], np.ndarray], system: SwitchedAffineSystem,
                      signals: Sequence[SwitchingSignal], initial: np.ndarray, horizon: float, *,
                      dt: float = 0.01, tol: float = 1e-6,
                      distance: Callable[[np.ndarray], np.ndarray] | None = None,
                      max_witnesses: int = 10) -> InvarianceReport:
    """Checks that solutions started in a set never leave it.

    Args:
        contains: Membership predicate ``contains(points, tol) -> bool array``.
        signals: One signal per initial point.
        initial: Initial points inside the set, one row per signal.
        distance: Optional distance-to-set, used for the excursion size.
    """
    initial = np.atleast_2d(np.asarray(initial, dtype=float)) if len(signals) else np.zeros((0, system.dim))
    if len(signals) != initial.shape[0]:
        raise ValueError("need one initial point per signal")
    rep = InvarianceReport()
    prop = _Propagator(system)
    for k, (sig, x0) in enumerate(zip(signals, initial)):
        traj = simulate(system, sig, x0, horizon, dt, prop=prop)
        rep.tested += 1
        rep.samples += traj.times.size
        bad = ~np.asarray(contains(traj.states, tol), dtype=bool)
        if bad.any():
            rep.violations += int(bad.sum())
            rep.violating_trajectories += 1
            idx = np.flatnonzero(bad)
            if distance is not None:
                rep.max_excursion = max(rep.max_excursion, float(np.max(distance(traj.states[idx]))))
            if len(rep.witnesses) < max_witnesses:
                first = idx[0]
                rep.witnesses.append(Witness(k, float(traj.times[first]), traj.states[first].tolist(),
                                             f"mode {int(traj.modes[first]) + 1}"))
    rep.witnesses.sort(key=lambda w: (w.trajectory, w.time))
    return rep


@dataclass
class UgubRecord:
    entry_time: float | None
    first_v_time: float | None
    exits: int
    diverged: bool


@dataclass
class UgubReport:
    records: list[UgubRecord]
    witnesses: list[Witness] = field(default_factory=list)

    @property
    def entered(self) -> int:
        return sum(r.entry_time is not None for r in self.records)

    @property
    def exits(self) -> int:
        return sum(r.exits for r in self.records)

    @property
    def diverged(self) -> int:
        return sum(r.diverged for r in self.records)

    @property
    def ok(self) -> bool:
        return self.exits == 0 and self.entered == len(self.records)

    def to_dict(self) -> dict:
        return {
            "trajectories": len(self.records),
            "entered": self.entered,
            "post_entry_exits": self.exits,
            "diverged": self.diverged,
            "entry_times": [r.entry_time for r in self.records],
            "first_v_times": [r.first_v_time for r in self.records],
            "witnesses": [w.__dict__ for w in self.witnesses],
        }


def verify_ugub(system: SwitchedAffineSystem, cert, signals: Sequence[SwitchingSignal], initial: np.ndarray,
                horizon: float, *, dt: float = 0.05, m: int = 200, tol: float = 1e-6,
                max_witnesses: int = 10) -> UgubReport:
    """Entry into the bounding region and absence of later exits.

    The entry time is the first switching instant (or ``t = 0``) at which the
    state lies in the safety set ``X``; from there the dwell-time argument
    keeps every later state in ``V``. Exits are samples after the entry time
    that fail the ``V`` membership test. The first sample time in ``V`` is
    reported separately.
    """
    from .dwell import BoundingRegion

    region = BoundingRegion(system, cert, m)
    prop = _Propagator(system)
    records, witnesses = [], []
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    for k, (sig, x0) in enumerate(zip(signals, initial)):
        traj = simulate(system, sig, x0, horizon, dt, prop=prop)
        anchors = np.concatenate([[0], traj.switch_index]).astype(int)
        in_x = cert.in_safety_set(traj.states[anchors], tol)
        entry_idx = int(anchors[np.argmax(in_x)]) if in_x.any() else None
        in_x_all = cert.in_safety_set(traj.states, tol)
        inside_v = in_x_all.copy()
        if (~in_x_all).any():
            inside_v[~in_x_all] = region.contains(traj.states[~in_x_all], tol)
        first_v = float(traj.times[np.argmax(inside_v)]) if inside_v.any() else None
        exits = 0
        if entry_idx is not None:
            after = np.flatnonzero(~inside_v[entry_idx:]) + entry_idx
            exits = int(after.size)
            if exits and len(witnesses) < max_witnesses:
                s = after[0]
                witnesses.append(Witness(k, float(traj.times[s]), traj.states[s].tolist(), "left V after entry"))
        records.append(UgubRecord(None if entry_idx is None else float(traj.times[entry_idx]),
                                  first_v, exits, traj.diverged))
    return UgubReport(records, witnesses)


@dataclass
class DecayFit:
    kappa: float
    residual: float
    samples: int


def decay_fit(times: np.ndarray, dist: np.ndarray, floor: float = 1e-12) -> DecayFit:
    """Least-squares slope of ``log dist`` against time over positive distances."""
    times = np.asarray(times, dtype=float)
    dist = np.asarray(dist, dtype=float)
    keep = dist > floor
    if keep.sum() < 3:
        raise ValueError("too few samples outside the set for a decay fit")
    t, y = times[keep], np.log(dist[keep])
    X = np.stack([t, np.ones_like(t)], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return DecayFit(float(-coef[0]), resid, int(keep.sum()))


def decay_estimate(trajectories: Sequence[Trajectory], distance: Callable[[np.ndarray], np.ndarray],
                   contains: Callable[[np.ndarray], np.ndarray] | None = None) -> list[DecayFit]:
    """Per-trajectory decay rate of the distance to a set, before entry.

    The segment stops at the first sample inside the set when ``contains``
    is given; otherwise at the first non-positive distance.
    """
    fits = []
    for traj in trajectories:
        d = np.asarray(distance(traj.states), dtype=float)
        inside = np.asarray(contains(traj.states), dtype=bool) if contains is not None else d <= 0
        stop = int(np.argmax(inside)) if inside.any() else d.size
        fits.append(decay_fit(traj.times[:stop], d[:stop]))
    return fits


@dataclass
class NagumoReport:
    """Signed normal components of every mode's field on boundary samples.

    Attributes:
        max_inner: Worst (largest) unit-normal component per mode.
        outward: Number of samples with a positive component, per mode.
        witnesses: Per mode, the sample with the largest component.
    """

    max_inner: list[float]
    outward: list[int]
    witnesses: list[list[float]]
    samples: int

    def consistent(self, tol: float = 1e-8) -> bool:
        return all(v <= tol for v in self.max_inner)

    def to_dict(self) -> dict:
        return {"max_inner": self.max_inner, "outward": self.outward,
                "witnesses": self.witnesses, "samples": self.samples}


def nagumo_check(convex_set, system: SwitchedAffineSystem, boundary: np.ndarray, tol: float = 1e-8) -> NagumoReport:
    """Classifies each mode's field at boundary samples as inward or outward.

    At corners every active facet normal is checked and the worst case kept,
    since the flow leaves the set as soon as one active facet is crossed.
    """
    boundary = np.atleast_2d(np.asarray(boundary, dtype=float))
    Mm = system.num_modes
    worst = [-np.inf] * Mm
    outward = [0] * Mm
    wit: list[list[float]] = [[] for _ in range(Mm)]
    for x in boundary:
        normals = [v / np.linalg.norm(v) for v in convex_set.outward_normals(x) if np.linalg.norm(v) > 0]
        if not normals:
            raise ValueError(f"no outward normal at {x.tolist()}")
        for i, mode in enumerate(system.modes):
            f = mode.field(x)
            val = max(float(nv @ f) for nv in normals)
            if val > tol:
                outward[i] += 1
            if val > worst[i]:
                worst[i] = val
                wit[i] = x.tolist()
    return NagumoReport(worst, outward, wit, boundary.shape[0])


def cycle_signal(modes: Sequence[int], durations: Sequence[float], horizon: float) -> SwitchingSignal:
    """Periodic signal visiting ``modes`` for the matching ``durations``."""
    if len(modes) != len(durations) or not modes:
        raise ValueError("need one duration per mode in the cycle")
    times, vals, t, k = [], [], 0.0, 0
    while t < horizon:
        times.append(t)
        vals.append(modes[k % len(modes)])
        t += float(durations[k % len(durations)])
        k += 1
    return SwitchingSignal(tuple(times), tuple(vals))


def cycle_spectral_radius(system: SwitchedAffineSystem, modes: Sequence[int], durations: Sequence[float]) -> float:
    """Spectral radius of the linear monodromy matrix of a periodic cycle.

    Values above one mean the periodic signal destabilizes the linear part,
    so solutions diverge.
    """
    from .numerics import matrix_exponential

    T = np.eye(system.dim)
    for i, h in zip(modes, durations):
        T = matrix_exponential(system[i].A, h) @ T
    return float(np.max(np.abs(np.linalg.eigvals(T))))
