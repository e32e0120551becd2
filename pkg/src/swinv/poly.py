"""Dense multivariate polynomials over a fixed monomial list."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


def monomials(n: int, max_degree: int, min_degree: int = 0) -> np.ndarray:
    """Exponent vectors of all monomials with total degree in ``[min_degree, max_degree]``.

    Ordered by total degree, then reverse-lexicographically within a degree.
    """
    out = []
    for deg in range(min_degree, max_degree + 1):
        for e in itertools.product(range(deg, -1, -1), repeat=n):
            if sum(e) == deg:
                out.append(e)
    return np.array(out, dtype=int).reshape(-1, n)


def _index(exps: np.ndarray) -> dict[tuple[int, ...], int]:
    return {tuple(int(v) for v in e): k for k, e in enumerate(exps)}


@dataclass(frozen=True)
class Polynomial:
    """``sum_k coeffs[k] * prod_j x_j ** exponents[k, j]``."""

    exponents: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.exponents, dtype=int)
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if e.ndim != 2 or e.shape[0] != c.shape[0]:
            raise ValueError("exponents and coefficients disagree in length")
        object.__setattr__(self, "exponents", e)
        object.__setattr__(self, "coeffs", c)

    @property
    def nvars(self) -> int:
        return self.exponents.shape[1]

    @property
    def degree(self) -> int:
        nz = self.coeffs != 0
        return int(self.exponents[nz].sum(axis=1).max()) if nz.any() else 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._terms(np.atleast_2d(np.asarray(x, dtype=float)), self.exponents) @ self.coeffs

    @staticmethod
    def _terms(x: np.ndarray, exps: np.ndarray) -> np.ndarray:
        # power table avoids elementwise float ** int over every monomial
        top = int(exps.max()) if exps.size else 0
        pw = np.ones((x.shape[0], x.shape[1], top + 1))
        for k in range(1, top + 1):
            pw[:, :, k] = pw[:, :, k - 1] * x
        terms = np.ones((x.shape[0], exps.shape[0]))
        for j in range(x.shape[1]):
            terms *= pw[:, j, exps[:, j]]
        return terms

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient at each row of ``x``, shape ``(N, n)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        grads = []
        for j in range(self.nvars):
            e = self.exponents.copy()
            factor = e[:, j].astype(float)
            e[:, j] = np.maximum(e[:, j] - 1, 0)
            grads.append(self._terms(x, e) @ (self.coeffs * factor))
        return np.stack(grads, axis=1)

    def homogeneous_part(self, degree: int) -> "Polynomial":
        mask = self.exponents.sum(axis=1) == degree
        return Polynomial(self.exponents[mask], self.coeffs[mask])

    def to_dict(self) -> dict:
        return {"exponents": self.exponents.tolist(), "coefficients": self.coeffs.tolist()}


def gram_map(half: np.ndarray, full: np.ndarray) -> sp.csr_matrix:
    """Sparse map from a row-major flattened Gram matrix to polynomial coefficients.

    Row ``k`` collects every entry ``Q[a, b]`` with ``half[a] + half[b] == full[k]``,
    so ``gram_map @ vec(Q)`` are the coefficients of ``z' Q z``.
    """
    index = _index(full)
    m = half.shape[0]
    rows, cols = [], []
    for a in range(m):
        for b in range(m):
            rows.append(index[tuple(int(v) for v in half[a] + half[b])])
            cols.append(a * m + b)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(full.shape[0], m * m))


def lie_derivative_map(full: np.ndarray, A: np.ndarray, b: np.ndarray) -> sp.csr_matrix:
    """Linear map from coefficients of ``V`` to those of ``grad V . (A x + b)``.

    Both polynomials live on the monomial list ``full``; the affine field does
    not raise the degree, so the result stays on the same list.
    """
    index = _index(full)
    n = full.shape[1]
    rows, cols, vals = [], [], []
    for col, e in enumerate(full):
        for k in range(n):
            if e[k] == 0:
                continue
            de = e.copy()
            de[k] -= 1
            for l in range(n):
                if A[k, l] != 0.0:
                    mm = de.copy()
                    mm[l] += 1
                    rows.append(index[tuple(int(v) for v in mm)])
                    cols.append(col)
                    vals.append(e[k] * A[k, l])
            if b[k] != 0.0:
                rows.append(index[tuple(int(v) for v in de)])
                cols.append(col)
                vals.append(e[k] * b[k])
    return sp.csr_matrix((vals, (rows, cols)), shape=(full.shape[0], full.shape[0]))
