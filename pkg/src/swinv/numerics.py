"""Dense linear-algebra kernels: matrix exponentials and definiteness checks.

The exponential is the scaling-and-squaring method with Pade approximants of
degree up to 13. Every module uses this single routine so that
flows agree bit for bit wherever they are computed.
"""

from __future__ import annotations

import logging

import numpy as np

from .system import Mode

log = logging.getLogger(__name__)

_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
         33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0),
}


def _pade_low(A: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    b = _PADE[m]
    ident = np.eye(A.shape[0])
    A2 = A @ A
    powers = [ident, A2]
    for _ in range((m - 1) // 2 - 1):
        powers.append(powers[-1] @ A2)
    U = sum(b[2 * k + 1] * powers[k] for k in range((m + 1) // 2))
    V = sum(b[2 * k] * powers[k] for k in range((m + 1) // 2))
    return A @ U, V


def _pade13(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = _PADE[13]
    ident = np.eye(A.shape[0])
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return U, V


def matrix_exponential(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Computes ``exp(A t)``.

    Args:
        A: Square matrix.
        t: Finite time scaling.

    Returns:
        The matrix exponential.

    Raises:
        ValueError: On non-finite input.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix_exponential needs a square matrix")
    if not np.isfinite(t) or not np.all(np.isfinite(A)):
        raise ValueError("matrix_exponential received non-finite entries")
    X = A * t
    norm1 = np.linalg.norm(X, 1)
    if norm1 == 0.0:
        return np.eye(A.shape[0])
    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            U, V = _pade_low(X, m)
            return np.linalg.solve(V - U, V + U)
    s = max(0, int(np.ceil(np.log2(norm1 / _THETA[13]))))
    U, V = _pade13(X / 2.0**s)
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


def augmented_matrix(mode: Mode) -> np.ndarray:
    """The matrix ``[[A, b], [0, 0]]`` acting on ``xi = (x, 1)``."""
    return mode.augmented()


def augmented_exponential(mode: Mode, t: float) -> np.ndarray:
    """Exact affine flow map of one mode over time ``t`` in augmented form.

    The top-left block is ``exp(A t)``, the top-right column is
    ``int_0^t exp(A (t - s)) b ds`` and the bottom row is ``(0, ..., 0, 1)``.
    """
    E = matrix_exponential(mode.augmented(), t)
    n = mode.dim
    E[n, :n] = 0.0
    E[n, n] = 1.0
    return E


def symmetrize(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    asym = np.max(np.abs(S - S.T), initial=0.0)
    if asym > 1e-10 * (1.0 + np.max(np.abs(S), initial=0.0)):
        log.debug("symmetrizing matrix with asymmetry %.3e", asym)
    return 0.5 * (S + S.T)


def min_eigenvalue(S: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(S))[0])


def default_margin(S: np.ndarray) -> float:
    """Strictness margin ``1e-9 (1 + ||S||_2)``."""
    return 1e-9 * (1.0 + np.linalg.norm(S, 2))


def is_positive_definite(S: np.ndarray, margin: float | None = None) -> bool:
    """True iff the smallest eigenvalue of ``S`` exceeds ``margin``.

    Args:
        S: Square matrix; symmetrized before the check.
        margin: Eigenvalue threshold. Defaults to ``1e-9 (1 + ||S||)``.
    """
    S = symmetrize(S)
    if margin is None:
        margin = default_margin(S)
    return min_eigenvalue(S) > margin
