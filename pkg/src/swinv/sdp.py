"""Declarative builder for linear matrix inequality programs.

Programs are written with affine matrix expressions over declared scalar,
vector and symmetric-matrix variables, then compiled to the standard conic
form

    minimize  q'x  subject to  A x + s = b,  s in K

where ``K`` is a product of zero, nonnegative and PSD-triangle cones. PSD
blocks are vectorized as the upper triangle in column-major order with
off-diagonal entries multiplied by sqrt(2). A solver adapter consumes that
form; every returned point is re-verified with independent eigenvalue checks.

Badly scaled problems (variables or block entries spanning many orders of
magnitude) are handled by a diagonal change of variables together with a
congruence scaling of each PSD block, both estimated from a previous solution
or a caller-supplied hint point.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERIC_FAILURE = "numeric-failure"

_SQRT2 = math.sqrt(2.0)


def _pad(m: sp.csr_matrix, ncols: int) -> sp.csr_matrix:
    if m.shape[1] == ncols:
        return m
    if m.shape[1] > ncols:
        raise ValueError("cannot shrink coefficient matrix")
    m = sp.csr_matrix(m)
    return sp.csr_matrix((m.data, m.indices, m.indptr), shape=(m.shape[0], ncols))


class Affine:
    """Matrix-valued affine function ``const + sum_k x_k F_k`` of the variables.

    Entries are flattened row-major; ``coef`` maps the variable vector to the
    flattened entries.
    """

    __array_ufunc__ = None

    def __init__(self, const: np.ndarray, coef: sp.spmatrix | None = None):
        const = np.asarray(const, dtype=float)
        if const.ndim == 0:
            const = const.reshape(1, 1)
        elif const.ndim == 1:
            const = const.reshape(-1, 1)
        self.const = const
        if coef is None:
            coef = sp.csr_matrix((const.size, 0))
        self.coef = sp.csr_matrix(coef)
        if self.coef.shape[0] != const.size:
            raise ValueError("coefficient rows do not match expression size")

    @property
    def shape(self) -> tuple[int, int]:
        return self.const.shape

    @property
    def nvar(self) -> int:
        return self.coef.shape[1]

    def __repr__(self):
        return f"Affine(shape={self.shape}, nnz={self.coef.nnz})"

    # arithmetic -----------------------------------------------------------
    def _binary(self, other, sign: float) -> "Affine":
        if not isinstance(other, Affine):
            arr = np.asarray(other, dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            return Affine(self.const + sign * np.broadcast_to(arr, self.shape), self.coef)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        n = max(self.nvar, other.nvar)
        return Affine(self.const + sign * other.const,
                      _pad(self.coef, n) + sign * _pad(other.coef, n))

    def __add__(self, other):
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return (-self)._binary(other, 1.0)

    def __neg__(self):
        return Affine(-self.const, -self.coef)

    def __mul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        arr = np.asarray(other, dtype=float)
        if arr.ndim == 0:
            return Affine(self.const * float(arr), self.coef * float(arr))
        if self.shape == (1, 1):
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            col = sp.csr_matrix(arr.reshape(-1, 1))
            return Affine(arr * self.const[0, 0], sp.kron(col, self.coef, format="csr"))
        raise TypeError("only scalars or 1x1 expressions may multiply matrices")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def __matmul__(self, other):
        B = np.asarray(other, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        r, c = self.shape
        if B.shape[0] != c:
            raise ValueError(f"matmul shape mismatch {self.shape} @ {B.shape}")
        L = sp.kron(sp.identity(r, format="csr"), sp.csr_matrix(B.T), format="csr")
        return Affine(self.const @ B, L @ self.coef)

    def __rmatmul__(self, other):
        return self.left_mul(other)

    def left_mul(self, A) -> "Affine":
        """Returns ``A @ self`` for a dense or sparse constant matrix ``A``."""
        if sp.issparse(A):
            A = sp.csr_matrix(A)
        else:
            A = np.asarray(A, dtype=float)
            if A.ndim == 1:
                A = A.reshape(1, -1)
        r, c = self.shape
        if A.shape[1] != r:
            raise ValueError(f"matmul shape mismatch {A.shape} @ {self.shape}")
        L = sp.kron(sp.csr_matrix(A), sp.identity(c, format="csr"), format="csr")
        const = A @ self.const
        return Affine(np.asarray(const), L @ self.coef)

    @property
    def T(self) -> "Affine":
        r, c = self.shape
        perm = np.arange(r * c).reshape(r, c).T.ravel()
        return Affine(self.const.T.copy(), self.coef[perm])

    def __getitem__(self, key) -> "Affine":
        r, c = self.shape
        idx = np.arange(r * c).reshape(r, c)[key]
        if idx.ndim == 0:
            idx = idx.reshape(1, 1)
        elif idx.ndim == 1:
            row_vector = isinstance(key, tuple) and isinstance(key[0], (int, np.integer))
            idx = idx.reshape(1, -1) if row_vector else idx.reshape(-1, 1)
        return Affine(self.const.ravel()[idx.ravel()].reshape(idx.shape), self.coef[idx.ravel()])

    def trace(self) -> "Affine":
        r, c = self.shape
        if r != c:
            raise ValueError("trace of a non-square expression")
        rows = np.arange(r) * (c + 1)
        sel = sp.csr_matrix((np.ones(r), (np.zeros(r, dtype=int), rows)), shape=(1, r * c))
        return Affine(np.array([[np.trace(self.const)]]), sel @ self.coef)

    def sum(self) -> "Affine":
        ones = sp.csr_matrix(np.ones((1, self.const.size)))
        return Affine(np.array([[self.const.sum()]]), ones @ self.coef)

    def vec(self) -> "Affine":
        """Row-major flattening into a column."""
        return Affine(self.const.reshape(-1, 1), self.coef)

    def reshape(self, r: int, c: int) -> "Affine":
        return Affine(self.const.reshape(r, c), self.coef)

    def sym(self) -> "Affine":
        return 0.5 * (self + self.T)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.nvar
        flat = self.const.ravel() + (self.coef @ x[:n] if n else 0.0)
        return np.asarray(flat).reshape(self.shape)


def constant(arr) -> Affine:
    return Affine(np.asarray(arr, dtype=float))


def as_affine(x) -> Affine:
    return x if isinstance(x, Affine) else constant(x)


def bmat(blocks: Sequence[Sequence]) -> Affine:
    """Assembles a block matrix from affine expressions, arrays, or ``None`` (zeros)."""
    nbr, nbc = len(blocks), len(blocks[0])
    heights = [None] * nbr
    widths = [None] * nbc
    for i, row in enumerate(blocks):
        if len(row) != nbc:
            raise ValueError("ragged block structure")
        for j, blk in enumerate(row):
            if blk is None:
                continue
            shp = blk.shape if isinstance(blk, Affine) else np.atleast_2d(np.asarray(blk)).shape
            for store, k, v in ((heights, i, shp[0]), (widths, j, shp[1])):
                if store[k] is None:
                    store[k] = v
                elif store[k] != v:
                    raise ValueError("inconsistent block sizes")
    if None in heights or None in widths:
        raise ValueError("every block row and column needs at least one sized block")
    R, C = sum(heights), sum(widths)
    roff = np.concatenate([[0], np.cumsum(heights)])
    coff = np.concatenate([[0], np.cumsum(widths)])
    const = np.zeros((R, C))
    nvar = max((b.nvar for row in blocks for b in row if isinstance(b, Affine)), default=0)
    rows, cols, vals = [], [], []
    for i, row in enumerate(blocks):
        for j, blk in enumerate(row):
            if blk is None:
                continue
            blk = as_affine(blk)
            h, w = blk.shape
            const[roff[i]:roff[i] + h, coff[j]:coff[j] + w] = blk.const
            if blk.nvar and blk.coef.nnz:
                target = ((roff[i] + np.arange(h))[:, None] * C + coff[j] + np.arange(w)[None, :]).ravel()
                coo = blk.coef.tocoo()
                rows.append(target[coo.row])
                cols.append(coo.col)
                vals.append(coo.data)
    if rows:
        coef = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(R * C, nvar))
    else:
        coef = sp.csr_matrix((R * C, nvar))
    return Affine(const, coef)


def hstack(items: Sequence) -> Affine:
    return bmat([list(items)])


def vstack(items: Sequence) -> Affine:
    return bmat([[it] for it in items])


def svec_matrix(k: int) -> sp.csr_matrix:
    """Sparse map from the row-major flattening of a k x k matrix to its svec.

    Off-diagonal entries are averaged over the symmetric pair and scaled by sqrt(2).
    """
    rows, cols, vals = [], [], []
    r = 0
    for j in range(k):
        for i in range(j + 1):
            if i == j:
                rows.append(r)
                cols.append(i * k + i)
                vals.append(1.0)
            else:
                rows += [r, r]
                cols += [i * k + j, j * k + i]
                vals += [_SQRT2 / 2, _SQRT2 / 2]
            r += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(k * (k + 1) // 2, k * k))


def svec_pairs(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column index of every svec entry."""
    ii, jj = [], []
    for j in range(k):
        for i in range(j + 1):
            ii.append(i)
            jj.append(j)
    return np.array(ii), np.array(jj)


@dataclass
class VariableGroup:
    name: str
    kind: str
    shape: tuple[int, int]
    offset: int
    size: int


@dataclass
class LmiBlock:
    name: str
    expr: Affine
    margin: float


@dataclass
class LinearRows:
    name: str
    expr: Affine
    kind: str  # "eq" or "nonneg"


@dataclass
class StandardForm:
    """Compiled program ``min q'x + offset`` s.t. ``A x + s = b``, ``s`` in the cones.

    Attributes:
        cones: Sequence of ``("zero", m)``, ``("nonneg", m)`` or ``("psd", k)``.
    """

    q: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list[tuple[str, int]]
    offset: float = 0.0

    @property
    def nvar(self) -> int:
        return self.q.shape[0]

    def scaled(self, var_scale: np.ndarray, row_scale: np.ndarray) -> "StandardForm":
        """Substitutes ``x = diag(var_scale) x'`` and scales constraint rows.

        Row scaling must preserve each cone, which holds for positive scalars on
        zero/nonnegative rows and for congruence-induced ``D_i D_j`` on PSD rows.
        """
        Dv = sp.diags(var_scale)
        Dr = sp.diags(row_scale)
        return StandardForm(self.q * var_scale, sp.csc_matrix(Dr @ self.A @ Dv),
                            self.b * row_scale, list(self.cones), self.offset)

    def dump(self, path: str) -> None:
        """Writes the program in a plain sparse-triplet text format.

        Layout: header lines, then ``q`` nonzeros as ``j value``, then ``A``
        nonzeros as ``i j value``, then ``b`` nonzeros as ``i value``. Indices
        are 0-based. PSD cones use the scaled upper-triangle column-major svec.
        """
        A = self.A.tocoo()
        lines = [
            "# swinv cone program: minimize q'x + offset s.t. A x + s = b, s in K",
            "# psd cones: svec of upper triangle, column-major, off-diagonals times sqrt(2)",
            f"nvar {self.nvar}",
            f"nrows {self.A.shape[0]}",
            "cones " + " ".join(f"{k}:{m}" for k, m in self.cones),
            f"offset {self.offset:.17g}",
            f"q {np.count_nonzero(self.q)}",
        ]
        lines += [f"{j} {v:.17g}" for j, v in enumerate(self.q) if v != 0.0]
        lines.append(f"A {A.nnz}")
        lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(A.row, A.col, A.data)]
        lines.append(f"b {np.count_nonzero(self.b)}")
        lines += [f"{i} {v:.17g}" for i, v in enumerate(self.b) if v != 0.0]
        from .fileio import atomic_write_text
        atomic_write_text(path, "\n".join(lines) + "\n")


class ConeProgram:
    """Mutable builder for an LMI program.

    Example:
        >>> prog = ConeProgram()
        >>> x = prog.scalar("x")
        >>> prog.add_lmi(x - 1.0)
        >>> prog.minimize(x)
    """

    def __init__(self, name: str = "program"):
        self.name = name
        self.groups: dict[str, VariableGroup] = {}
        self.nvar = 0
        self.lmis: list[LmiBlock] = []
        self.linear: list[LinearRows] = []
        self.objective: Affine | None = None

    def _declare(self, name: str, kind: str, shape: tuple[int, int], size: int) -> VariableGroup:
        if name in self.groups:
            raise ValueError(f"variable {name!r} already declared")
        g = VariableGroup(name, kind, shape, self.nvar, size)
        self.groups[name] = g
        self.nvar += size
        return g

    def scalar(self, name: str) -> Affine:
        g = self._declare(name, "scalar", (1, 1), 1)
        return Affine(np.zeros((1, 1)), sp.csr_matrix(([1.0], ([0], [g.offset])), shape=(1, self.nvar)))

    def vector(self, name: str, n: int) -> Affine:
        g = self._declare(name, "vector", (n, 1), n)
        coef = sp.csr_matrix((np.ones(n), (np.arange(n), g.offset + np.arange(n))), shape=(n, self.nvar))
        return Affine(np.zeros((n, 1)), coef)

    def symmetric(self, name: str, n: int) -> Affine:
        size = n * (n + 1) // 2
        g = self._declare(name, "symmetric", (n, n), size)
        index = np.zeros((n, n), dtype=int)
        k = 0
        for i in range(n):
            for j in range(i, n):
                index[i, j] = index[j, i] = g.offset + k
                k += 1
        coef = sp.csr_matrix((np.ones(n * n), (np.arange(n * n), index.ravel())), shape=(n * n, self.nvar))
        return Affine(np.zeros((n, n)), coef)

    def _check(self, expr: Affine) -> Affine:
        expr = as_affine(expr)
        if expr.nvar > self.nvar:
            raise ValueError("expression references undeclared variables")
        return expr

    def add_lmi(self, expr, margin: float = 0.0, name: str | None = None) -> None:
        """Adds the constraint ``expr >= margin * I`` in the semidefinite order."""
        expr = self._check(expr)
        r, c = expr.shape
        if r != c:
            raise ValueError("LMI block must be square")
        asym_c = np.max(np.abs(expr.const - expr.const.T), initial=0.0)
        asym_f = abs(expr.coef - expr.T.coef).max() if expr.coef.nnz else 0.0
        scale = 1.0 + np.max(np.abs(expr.const), initial=0.0) + (abs(expr.coef).max() if expr.coef.nnz else 0.0)
        if max(asym_c, asym_f) > 1e-9 * scale:
            raise ValueError("LMI block is not symmetric")
        self.lmis.append(LmiBlock(name or f"lmi{len(self.lmis)}", expr.sym(), float(margin)))

    def add_equality(self, expr, name: str | None = None) -> None:
        """Adds ``expr == 0`` element-wise."""
        self.linear.append(LinearRows(name or f"eq{len(self.linear)}", self._check(expr).vec(), "eq"))

    def add_nonneg(self, expr, name: str | None = None) -> None:
        """Adds ``expr >= 0`` element-wise."""
        self.linear.append(LinearRows(name or f"ineq{len(self.linear)}", self._check(expr).vec(), "nonneg"))

    def add_box(self, expr, center, radius: float, name: str | None = None) -> None:
        """Adds ``|expr - center| <= radius`` element-wise."""
        expr = self._check(expr)
        diff = expr - center
        self.add_nonneg(diff + radius, name)
        self.add_nonneg(radius - diff, name)

    def minimize(self, expr) -> None:
        expr = self._check(expr)
        if expr.shape != (1, 1):
            raise ValueError("objective must be scalar")
        self.objective = expr

    # points ---------------------------------------------------------------
    def point(self, values: dict[str, np.ndarray]) -> np.ndarray:
        """Assembles a full variable vector from named values; missing groups are zero."""
        x = np.zeros(self.nvar)
        for name, val in values.items():
            g = self.groups[name]
            val = np.asarray(val, dtype=float)
            if g.kind == "symmetric":
                n = g.shape[0]
                iu = np.triu_indices(n)
                x[g.offset:g.offset + g.size] = 0.5 * (val + val.T)[iu]
            else:
                x[g.offset:g.offset + g.size] = val.ravel()
        return x

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray | float]:
        out: dict[str, np.ndarray | float] = {}
        for name, g in self.groups.items():
            seg = x[g.offset:g.offset + g.size]
            if g.kind == "scalar":
                out[name] = float(seg[0])
            elif g.kind == "vector":
                out[name] = seg.copy()
            else:
                n = g.shape[0]
                S = np.zeros((n, n))
                S[np.triu_indices(n)] = seg
                out[name] = S + np.triu(S, 1).T
        return out

    # compilation ----------------------------------------------------------
    def compile(self) -> StandardForm:
        N = self.nvar
        q = np.zeros(N)
        offset = 0.0
        if self.objective is not None:
            q = np.asarray(_pad(self.objective.coef, N).todense()).ravel()
            offset = float(self.objective.const[0, 0])
        Arows, brows, cones = [], [], []
        for kind, cone in (("eq", "zero"), ("nonneg", "nonneg")):
            block = [r for r in self.linear if r.kind == kind]
            if not block:
                continue
            coef = sp.vstack([_pad(r.expr.coef, N) for r in block])
            const = np.concatenate([r.expr.const.ravel() for r in block])
            if kind == "eq":
                Arows.append(coef)
                brows.append(-const)
            else:
                Arows.append(-coef)
                brows.append(const)
            cones.append((cone, coef.shape[0]))
        for blk in self.lmis:
            k = blk.expr.shape[0]
            S = svec_matrix(k)
            Arows.append(-(S @ _pad(blk.expr.coef, N)))
            brows.append(S @ (blk.expr.const - blk.margin * np.eye(k)).ravel())
            cones.append(("psd", k))
        A = sp.csc_matrix(sp.vstack(Arows)) if Arows else sp.csc_matrix((0, N))
        b = np.concatenate(brows) if brows else np.zeros(0)
        return StandardForm(q, A, b, cones, offset)

    # verification ---------------------------------------------------------
    def verify(self, x: np.ndarray, tol: float = 1e-7) -> "Verification":
        """Independent residual check of a candidate point.

        Each LMI block ``B`` with margin ``m`` passes when
        ``lambda_min(B - m I) >= -tol (1 + ||B||)``. Linear rows are compared
        against the magnitude of their own terms.
        """
        x = np.asarray(x, dtype=float)
        eigs, lmi_res, ok = [], 0.0, True
        for blk in self.lmis:
            B = blk.expr.value(x)
            B = 0.5 * (B + B.T)
            lam = float(np.linalg.eigvalsh(B)[0])
            norm = float(np.linalg.norm(B, 2))
            gap = lam - blk.margin
            eigs.append(lam)
            viol = max(0.0, -gap) / (1.0 + norm)
            lmi_res = max(lmi_res, viol)
            if gap < -tol * (1.0 + norm):
                ok = False
        lin_res = 0.0
        for rows in self.linear:
            coef = rows.expr.coef
            n = coef.shape[1]
            val = rows.expr.value(x).ravel()
            mag = 1.0 + np.abs(rows.expr.const.ravel()) + (abs(coef) @ np.abs(x[:n]) if n else 0.0)
            if rows.kind == "eq":
                rel = np.abs(val) / mag
            else:
                rel = np.maximum(0.0, -val) / mag
            if rel.size:
                lin_res = max(lin_res, float(rel.max()))
        if lin_res > tol:
            ok = False
        return Verification(ok, lmi_res, lin_res, eigs)


@dataclass
class Verification:
    ok: bool
    lmi_residual: float
    linear_residual: float
    min_eigenvalues: list[float]


@dataclass
class RawResult:
    status: str  # "solved", "infeasible", "unbounded", "failed"
    x: np.ndarray | None
    detail: str
    iterations: int = 0


@dataclass
class SolverReport:
    """Outcome of :func:`solve`.

    Attributes:
        status: One of ``optimal``, ``infeasible`` or ``numeric-failure``.
        x: Variable vector (may be a partial point on failure).
        values: Named variable values.
        objective: Objective value at ``x``.
        max_residual: Largest relative constraint violation at ``x``.
    """

    status: str
    x: np.ndarray | None
    values: dict
    objective: float
    max_residual: float
    min_eigenvalues: list[float] = field(default_factory=list)
    solver_status: str = ""
    passes: int = 0
    seconds: float = 0.0
    diagnostics: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def __getitem__(self, name: str):
        return self.values[name]

    def value(self, expr: Affine) -> np.ndarray:
        return expr.value(self.x)


# backends -----------------------------------------------------------------
def _thread_cap() -> int | None:
    raw = os.environ.get("SWINV_THREADS")
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        return None


class ClarabelBackend:
    """Adapter for the Clarabel interior-point solver."""

    name = "clarabel"

    def __init__(self, **settings):
        self.settings = settings

    def solve(self, sf: StandardForm, warm_start: np.ndarray | None = None) -> RawResult:
        import clarabel

        opts = clarabel.DefaultSettings()
        opts.verbose = False
        for key, val in self.settings.items():
            setattr(opts, key, val)
        cap = _thread_cap()
        if cap is not None and hasattr(opts, "max_threads"):
            opts.max_threads = cap
        cones = []
        for kind, m in sf.cones:
            if kind == "zero":
                cones.append(clarabel.ZeroConeT(m))
            elif kind == "nonneg":
                cones.append(clarabel.NonnegativeConeT(m))
            else:
                cones.append(clarabel.PSDTriangleConeT(m))
        P = sp.csc_matrix((sf.nvar, sf.nvar))
        try:
            sol = clarabel.DefaultSolver(P, sf.q, sp.csc_matrix(sf.A), sf.b, cones, opts).solve()
        except Exception as exc:  # solver panics surface as generic exceptions
            return RawResult("failed", None, f"clarabel raised {exc!r}")
        status = str(sol.status)
        x = np.array(sol.x, dtype=float)
        if status in ("Solved", "AlmostSolved"):
            kind = "solved"
        elif status == "PrimalInfeasible":
            kind = "infeasible"
        elif status == "DualInfeasible":
            kind = "unbounded"
        else:
            kind = "failed"
        return RawResult(kind, x if np.all(np.isfinite(x)) else None, status, int(sol.iterations))


class CvxoptBackend:
    """Adapter for CVXOPT's ``conelp`` solver."""

    name = "cvxopt"

    def __init__(self, **options):
        self.options = {"show_progress": False, **options}

    def solve(self, sf: StandardForm, warm_start: np.ndarray | None = None) -> RawResult:
        import cvxopt
        from cvxopt import solvers

        A = sp.csr_matrix(sf.A)
        eq_rows, G_blocks, h_blocks = [], [], []
        dims = {"l": 0, "q": [], "s": []}
        start = 0
        psd_parts = []
        for kind, m in sf.cones:
            size = m if kind != "psd" else m * (m + 1) // 2
            rows = slice(start, start + size)
            if kind == "zero":
                eq_rows.append((A[rows], sf.b[rows]))
            elif kind == "nonneg":
                G_blocks.append(A[rows])
                h_blocks.append(sf.b[rows])
                dims["l"] += m
            else:
                psd_parts.append((A[rows], sf.b[rows], m))
            start += size
        for Ablk, bblk, k in psd_parts:
            # expand svec rows to full column-major k*k rows
            ii, jj = svec_pairs(k)
            rows, cols, vals = [], [], []
            for r, (i, j) in enumerate(zip(ii, jj)):
                w = 1.0 if i == j else 1.0 / _SQRT2
                for pos in {i + j * k, j + i * k}:
                    rows.append(pos)
                    cols.append(r)
                    vals.append(w)
            E = sp.csr_matrix((vals, (rows, cols)), shape=(k * k, len(ii)))
            G_blocks.append(E @ Ablk)
            h_blocks.append(E @ bblk)
            dims["s"].append(k)

        def to_sp(M):
            M = sp.coo_matrix(M)
            return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), M.shape)

        G = sp.vstack(G_blocks) if G_blocks else sp.csr_matrix((0, sf.nvar))
        h = np.concatenate(h_blocks) if h_blocks else np.zeros(0)
        if eq_rows:
            Aeq = sp.vstack([r[0] for r in eq_rows])
            beq = np.concatenate([r[1] for r in eq_rows])
        else:
            Aeq, beq = sp.csr_matrix((0, sf.nvar)), np.zeros(0)
        solvers.options.update(self.options)
        kwargs = {}
        if warm_start is not None:
            s0 = h - G @ warm_start
            kwargs["primalstart"] = {"x": cvxopt.matrix(warm_start), "s": cvxopt.matrix(s0)}
        try:
            res = solvers.conelp(cvxopt.matrix(sf.q), to_sp(G), cvxopt.matrix(h), dims,
                                 to_sp(Aeq), cvxopt.matrix(beq), **kwargs)
        except (ValueError, ArithmeticError) as exc:
            return RawResult("failed", None, f"cvxopt raised {exc!r}")
        status = res["status"]
        x = None if res["x"] is None else np.array(res["x"]).ravel()
        if status == "optimal":
            kind = "solved"
        elif status == "primal infeasible":
            kind = "infeasible"
        elif status == "dual infeasible":
            kind = "unbounded"
        else:
            kind = "failed"
        return RawResult(kind, x, status, int(res.get("iterations", 0) or 0))


_BACKENDS = {"clarabel": ClarabelBackend, "cvxopt": CvxoptBackend}


def get_backend(name_or_backend="clarabel"):
    if isinstance(name_or_backend, str):
        try:
            return _BACKENDS[name_or_backend]()
        except KeyError:
            raise ValueError(f"unknown solver backend {name_or_backend!r}") from None
    return name_or_backend


# scaling ------------------------------------------------------------------
def _scales_from_point(program: ConeProgram, sf: StandardForm, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Variable and row scalings that normalize the magnitudes seen at ``x``."""
    var_scale = np.ones(program.nvar)
    mags = {}
    for name, g in program.groups.items():
        seg = np.abs(x[g.offset:g.offset + g.size])
        mags[name] = float(seg.max()) if seg.size else 0.0
    top = max(mags.values(), default=0.0)
    for name, g in program.groups.items():
        s = mags[name]
        if not np.isfinite(s) or s <= 1e-10 * max(top, 1e-300):
            s = 1.0 if top == 0.0 else max(s, 1e-10 * top)
        var_scale[g.offset:g.offset + g.size] = s
    row_scale = np.ones(sf.A.shape[0])
    start = sum(m for kind, m in sf.cones if kind != "psd")
    for blk in program.lmis:
        k = blk.expr.shape[0]
        B = blk.expr.value(x)
        diag = np.abs(np.diag(B))
        ref = 1.0 + float(np.abs(blk.expr.const).max(initial=0.0))
        floor = 1e-6 * max(diag.max(), 1e-300)
        dinv = 1.0 / np.sqrt(np.maximum(diag, floor))
        # a block that vanishes at the point carries no scale information
        if diag.max() <= 1e-12 * ref or not np.all(np.isfinite(dinv)):
            dinv = np.ones(k)
        ii, jj = svec_pairs(k)
        size = ii.size
        row_scale[start:start + size] = dinv[ii] * dinv[jj]
        start += size
    return var_scale, row_scale


def _mismatch(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.log10(a) - np.log10(b))))


def solve(program: ConeProgram, *, backend="clarabel", rescale: bool = True,
          hint: np.ndarray | None = None, max_passes: int = 3,
          warm_start: np.ndarray | None = None, tol: float = 1e-7) -> SolverReport:
    """Solves a program and re-verifies the returned point.

    Args:
        program: The program to solve.
        backend: Adapter instance or name (``"clarabel"`` or ``"cvxopt"``).
        rescale: Re-solve after normalizing variable and block scales taken
            from the previous pass, while the scales keep changing.
        hint: Point used to derive the scaling of the first pass.
        max_passes: Upper bound on solver calls.
        warm_start: Candidate point; it is verified and forwarded to backends
            that accept primal starts.
        tol: Verification tolerance.

    Returns:
        A report whose status is ``optimal`` only if the independent
        verification passes.
    """
    t0 = time.perf_counter()
    solver = get_backend(backend)
    sf = program.compile()
    diags: list[str] = []
    if warm_start is not None:
        ver = program.verify(warm_start, tol)
        diags.append(f"warm start {'accepted' if ver.ok else 'rejected'} by verifier "
                     f"(lmi residual {ver.lmi_residual:.2e})")
    if hint is not None:
        var_scale, row_scale = _scales_from_point(program, sf, hint)
    else:
        var_scale, row_scale = np.ones(sf.nvar), np.ones(sf.A.shape[0])
    best: SolverReport | None = None
    passes = 0
    while passes < max(1, max_passes):
        passes += 1
        scaled = sf.scaled(var_scale, row_scale)
        ws = None if warm_start is None else warm_start / var_scale
        raw = solver.solve(scaled, warm_start=ws)
        x = None if raw.x is None else raw.x * var_scale
        report = _classify(program, sf, raw, x, tol)
        report.diagnostics = diags + [f"pass {passes}: {raw.detail}"]
        report.passes = passes
        if best is None or _better(report, best):
            best = report
        if raw.status == "infeasible" or x is None or not rescale:
            break
        new_var, new_row = _scales_from_point(program, sf, x)
        drift = max(_mismatch(new_var, var_scale), _mismatch(new_row, row_scale))
        if report.ok and drift < 0.5:
            break
        var_scale, row_scale = new_var, new_row
    best.seconds = time.perf_counter() - t0
    best.passes = passes
    return best


def _better(new: SolverReport, old: SolverReport) -> bool:
    if new.ok != old.ok:
        return new.ok
    if new.ok:
        # later passes run on better-conditioned data
        return True
    return new.max_residual < old.max_residual


def _classify(program: ConeProgram, sf: StandardForm, raw: RawResult, x, tol: float) -> SolverReport:
    if raw.status == "infeasible":
        return SolverReport(INFEASIBLE, None, {}, math.nan, math.nan, solver_status=raw.detail)
    if x is None:
        return SolverReport(NUMERIC_FAILURE, None, {}, math.nan, math.inf, solver_status=raw.detail)
    ver = program.verify(x, tol)
    obj = float(sf.q @ x + sf.offset)
    ok = raw.status == "solved" and ver.ok
    return SolverReport(
        OPTIMAL if ok else NUMERIC_FAILURE, x, program.unpack(x), obj,
        max(ver.lmi_residual, ver.linear_residual), ver.min_eigenvalues, raw.detail,
    )
