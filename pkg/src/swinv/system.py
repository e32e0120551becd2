"""Switched affine systems, switching signals and their equilibria.

A switched affine system is ``dx/dt = A[s] x + b[s]`` where the active mode
``s`` is chosen by a piecewise-constant switching signal. Mode indices are
0-based in the Python API and 1-based in every file and CLI interface.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NoEquilibriumError, NumericFailure, SystemValidationError


@dataclass(frozen=True)
class Mode:
    """One affine vector field ``x -> A x + b``.

    Attributes:
        A: Square dynamics matrix.
        b: Affine drive with the same dimension as ``A``.
    """

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise SystemValidationError([f"A must be square, got shape {A.shape}"])
        if b.shape[0] != A.shape[0]:
            raise SystemValidationError(
                [f"b has length {b.shape[0]} but A is {A.shape[0]}x{A.shape[1]}"]
            )
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def field(self, x: np.ndarray) -> np.ndarray:
        """Evaluates ``A x + b`` for one point or a batch of row vectors."""
        x = np.asarray(x, dtype=float)
        return x @ self.A.T + self.b

    def augmented(self) -> np.ndarray:
        """Returns the (n+1)x(n+1) matrix ``[[A, b], [0, 0]]``."""
        n = self.dim
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = self.A
        out[:n, n] = self.b
        return out


@dataclass(frozen=True)
class SwitchedAffineSystem:
    """An ordered, non-empty collection of modes sharing one state dimension."""

    modes: tuple[Mode, ...]

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise SystemValidationError(["mode list is empty"])
        dims = {m.dim for m in modes}
        if len(dims) != 1:
            raise SystemValidationError([f"modes have differing dimensions {sorted(dims)}"])
        object.__setattr__(self, "modes", modes)

    @property
    def dim(self) -> int:
        return self.modes[0].dim

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    def __len__(self) -> int:
        return len(self.modes)

    def __getitem__(self, i: int) -> Mode:
        return self.modes[i]

    @classmethod
    def from_matrices(cls, As: Sequence, bs: Sequence) -> "SwitchedAffineSystem":
        """Builds a validated system from parallel lists of ``A`` and ``b``."""
        return validate_system([{"A": A, "b": b} for A, b in zip(As, bs, strict=True)])

    def equilibria(self) -> list[np.ndarray]:
        return [mode_equilibrium(m) for m in self.modes]

    def to_dict(self) -> dict:
        return {
            "schema": "swinv/1",
            "modes": [{"A": m.A.tolist(), "b": m.b.tolist()} for m in self.modes],
        }


def validate_system(raw) -> SwitchedAffineSystem:
    """Validates raw mode data and builds a system.

    Args:
        raw: Either a list of ``{"A": ..., "b": ...}`` mappings or a mapping
            with a ``"modes"`` key holding such a list.

    Returns:
        The validated system.

    Raises:
        SystemValidationError: Lists every violated invariant, not only the first.
    """
    if isinstance(raw, dict):
        if "modes" not in raw:
            raise SystemValidationError(["missing 'modes' key"])
        raw = raw["modes"]
    problems: list[str] = []
    if raw is None or len(raw) == 0:
        raise SystemValidationError(["mode list is empty"])
    parsed = []
    for k, entry in enumerate(raw, start=1):
        try:
            A = np.array(entry["A"], dtype=float)
            b = np.array(entry["b"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"mode {k}: unreadable entry ({exc})")
            continue
        ok = True
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            problems.append(f"mode {k}: A must be square, got shape {A.shape}")
            ok = False
        if b.ndim != 1:
            problems.append(f"mode {k}: b must be a vector, got shape {b.shape}")
            ok = False
        if ok and b.shape[0] != A.shape[0]:
            problems.append(
                f"mode {k}: dimension mismatch, A is {A.shape[0]}x{A.shape[1]} "
                f"but b has length {b.shape[0]}"
            )
            ok = False
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            problems.append(f"mode {k}: non-finite entries")
            ok = False
        if ok:
            parsed.append(Mode(A, b))
    dims = {m.dim for m in parsed}
    if len(dims) > 1:
        problems.append(f"modes have differing dimensions {sorted(dims)}")
    if problems:
        raise SystemValidationError(problems)
    return SwitchedAffineSystem(tuple(parsed))


def mode_equilibrium(mode: Mode) -> np.ndarray:
    """Returns ``x_e = -A^{-1} b``.

    Raises:
        NoEquilibriumError: If ``A`` is singular or numerically so.
    """
    cond = np.linalg.cond(mode.A)
    if not np.isfinite(cond) or cond > 1e14:
        raise NoEquilibriumError("mode matrix is singular", float(cond))
    return -np.linalg.solve(mode.A, mode.b)


def spectral_abscissa(A: np.ndarray) -> float:
    """Largest real part among the eigenvalues of ``A``."""
    A = np.asarray(A, dtype=float)
    try:
        eig = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(eig.real))


def is_hurwitz(A: np.ndarray) -> bool:
    return spectral_abscissa(A) < 0.0


def simplex_grid(num_components: int, resolution: int) -> np.ndarray:
    """All barycentric weights with entries in ``{0, 1/k, ..., 1}``.

    Returns:
        Array of shape ``(K, num_components)`` with rows summing to one.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    rows = [
        c for c in itertools.product(range(resolution + 1), repeat=num_components)
        if sum(c) == resolution
    ]
    return np.array(rows, dtype=float) / resolution


@dataclass(frozen=True)
class FilippovSample:
    """Sampled Filippov equilibria.

    Attributes:
        points: Equilibria of the averaged fields, shape ``(K, n)``.
        weights: Convex weights that produced each point, shape ``(K, M)``.
        skipped: Weights whose averaged matrix was singular.
    """

    points: np.ndarray
    weights: np.ndarray
    skipped: np.ndarray
    diagnostics: list[str] = field(default_factory=list)


def filippov_equilibria(system: SwitchedAffineSystem, resolution: int) -> FilippovSample:
    """Samples the set of Filippov equilibria on a uniform simplex grid.

    Each weight vector ``lam`` over the modes gives the point
    ``-(sum lam_i A_i)^{-1} (sum lam_i b_i)``. The simplex runs over the M
    modes. Singular averaged matrices are skipped and recorded.
    """
    weights = simplex_grid(system.num_modes, resolution)
    As = np.stack([m.A for m in system.modes])
    bs = np.stack([m.b for m in system.modes])
    points, kept, skipped, notes = [], [], [], []
    for lam in weights:
        A = np.tensordot(lam, As, axes=1)
        b = lam @ bs
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e14:
            skipped.append(lam)
            notes.append(f"singular combination at weights {lam.tolist()} (cond {cond:.2e})")
            continue
        points.append(-np.linalg.solve(A, b))
        kept.append(lam)
    n, M = system.dim, system.num_modes
    if not points:
        notes.append("every sampled combination is singular")
    return FilippovSample(
        points=np.array(points).reshape(-1, n),
        weights=np.array(kept).reshape(-1, M),
        skipped=np.array(skipped).reshape(-1, M),
        diagnostics=notes,
    )


@dataclass(frozen=True)
class SwitchingSignal:
    """Right-continuous piecewise-constant mode schedule starting at ``t = 0``.

    Attributes:
        breakpoints: Strictly increasing switching times, the first equal to 0.
        values: Active mode on ``[breakpoints[k], breakpoints[k+1])``.
        dwell: Optional dwell-time tag; construction fails if any gap is shorter.
    """

    breakpoints: tuple[float, ...]
    values: tuple[int, ...]
    dwell: float | None = None

    def __post_init__(self):
        bp = tuple(float(t) for t in self.breakpoints)
        vals = tuple(int(v) for v in self.values)
        if not bp or bp[0] != 0.0:
            raise ValueError("breakpoints must start at t=0")
        if len(bp) != len(vals):
            raise ValueError("need exactly one mode value per interval")
        gaps = np.diff(bp)
        if np.any(gaps <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if any(a == b for a, b in zip(vals, vals[1:])):
            raise ValueError("mode value must change at every breakpoint")
        if any(v < 0 for v in vals):
            raise ValueError("mode indices must be non-negative")
        if self.dwell is not None and gaps.size:
            slack = 1e-12 * max(1.0, self.dwell)
            if np.min(gaps) < self.dwell - slack:
                raise ValueError(
                    f"gap {np.min(gaps):.6g} is shorter than dwell time {self.dwell:.6g}"
                )
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, mode: int) -> "SwitchingSignal":
        return cls((0.0,), (mode,))

    @classmethod
    def periodic(cls, modes: Sequence[int], period_each: float, horizon: float) -> "SwitchingSignal":
        """Cycles through ``modes`` spending ``period_each`` in each."""
        times, vals = [], []
        t, k = 0.0, 0
        while t < horizon:
            times.append(t)
            vals.append(modes[k % len(modes)])
            t += period_each
            k += 1
        return cls(tuple(times), tuple(vals))

    def mode_at(self, t: float) -> int:
        if t < 0:
            raise ValueError("signal is undefined for t < 0")
        k = bisect.bisect_right(self.breakpoints, t) - 1
        return self.values[k]

    def switch_times(self, t_end: float) -> list[float]:
        """Switching instants in ``(0, t_end]``."""
        return [t for t in self.breakpoints[1:] if t <= t_end]

    def pieces(self, t_end: float) -> list[tuple[float, float, int]]:
        """Splits ``[0, t_end]`` into ``(start, stop, mode)`` intervals."""
        out = []
        bp = self.breakpoints
        for k, t0 in enumerate(bp):
            if t0 >= t_end and not (t0 == 0.0 and t_end == 0.0):
                break
            t1 = bp[k + 1] if k + 1 < len(bp) else np.inf
            out.append((t0, min(t1, t_end), self.values[k]))
        return out

    def shifted(self, s: float) -> "SwitchingSignal":
        """The signal ``t -> sigma(t + s)`` restarted at zero."""
        bp = self.breakpoints
        k = bisect.bisect_right(bp, s) - 1
        times = [0.0] + [t - s for t in bp[k + 1:]]
        return SwitchingSignal(tuple(times), self.values[k:])
