"""Convex sets used as certificates and verification targets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .numerics import is_positive_definite, symmetrize


@dataclass(frozen=True)
class EllipsoidSet:
    """The set ``{x : (x - c)' S^{-1} (x - c) <= level^2}``.

    Attributes:
        center: Center ``c``.
        shape: Symmetric positive definite shape matrix ``S``.
        level: Radius in the norm ``v(y) = sqrt(y' S^{-1} y)``.
    """

    center: np.ndarray
    shape: np.ndarray
    level: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        S = symmetrize(np.asarray(self.shape, dtype=float))
        if S.shape != (c.size, c.size):
            raise ValueError("center and shape dimensions disagree")
        if not is_positive_definite(S, 0.0):
            raise ValueError("ellipsoid shape matrix must be positive definite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", S)
        object.__setattr__(self, "level", float(self.level))

    @classmethod
    def from_quadratic(cls, P: np.ndarray, center: np.ndarray, radius: float) -> "EllipsoidSet":
        """Builds ``{x : (x - c)' P (x - c) <= radius^2}``."""
        return cls(center, np.linalg.inv(symmetrize(P)), radius)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def precision(self) -> np.ndarray:
        """``S^{-1}``, the matrix of the quadratic norm."""
        return np.linalg.inv(self.shape)

    def norm(self, x: np.ndarray) -> np.ndarray:
        """``sqrt((x - c)' S^{-1} (x - c))`` row-wise."""
        y = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        Q = self.precision
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", y, Q, y), 0.0))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.norm(x) <= self.level * (1.0 + tol)

    def scaled(self, level: float) -> "EllipsoidSet":
        return EllipsoidSet(self.center, self.shape, level)

    def boundary_points(self, num: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Boundary samples; evenly spaced in angle for n=2 when ``rng`` is None."""
        L = np.linalg.cholesky(self.shape)
        if rng is None and self.dim == 2:
            th = np.linspace(0.0, 2 * np.pi, num, endpoint=False)
            u = np.stack([np.cos(th), np.sin(th)], axis=1)
        else:
            rng = rng or np.random.default_rng(0)
            u = rng.standard_normal((num, self.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + self.level * u @ L.T

    def interior_points(self, num: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples from the solid ellipsoid."""
        L = np.linalg.cholesky(self.shape)
        u = rng.standard_normal((num, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        rad = rng.random(num) ** (1.0 / self.dim)
        return self.center + self.level * (u * rad[:, None]) @ L.T

    def outward_normals(self, x: np.ndarray) -> list[np.ndarray]:
        return [self.precision @ (np.asarray(x, dtype=float) - self.center)]

    def distance(self, x: np.ndarray) -> np.ndarray:
        """Euclidean distance from each row of ``x`` to the set."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        Q = self.precision / self.level**2
        q, U = np.linalg.eigh(Q)
        out = np.zeros(x.shape[0])
        for k, z in enumerate(x - self.center):
            w = U.T @ z
            if np.sum(q * w * w) <= 1.0:
                continue

            def g(mu):
                return np.sum(q * w * w / (1.0 + mu * q) ** 2) - 1.0

            hi = 1.0 / q.min()
            while g(hi) > 0.0:
                hi *= 4.0
            mu = brentq(g, 0.0, hi, xtol=1e-14, rtol=1e-14)
            y = w / (1.0 + mu * q)
            out[k] = np.linalg.norm(w - y)
        return out

    def to_dict(self) -> dict:
        return {"c": self.center.tolist(), "S": self.shape.tolist(), "level": self.level}


@dataclass(frozen=True)
class Polytope:
    """The polyhedron ``{x : H x <= h}``; it may be unbounded."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", np.atleast_2d(np.asarray(self.H, dtype=float)))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float).reshape(-1))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all(x @ self.H.T <= self.h + tol * (1.0 + np.abs(self.h)), axis=1)

    def outward_normals(self, x: np.ndarray, tol: float = 1e-9) -> list[np.ndarray]:
        """Normals of every facet active at ``x``; several at a corner."""
        slack = self.h - self.H @ np.asarray(x, dtype=float)
        active = np.abs(slack) <= tol * (1.0 + np.abs(self.h))
        return [row for row in self.H[active]]


@dataclass(frozen=True)
class SublevelSet:
    """A convex set ``{x : g(x) <= 0}`` with a smooth boundary.

    Attributes:
        g: Defining function, vectorized over rows.
        grad: Gradient of ``g``; at the boundary it is an outward normal.
    """

    g: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.g(np.atleast_2d(x)) <= tol

    def outward_normals(self, x: np.ndarray) -> list[np.ndarray]:
        return [np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float).reshape(-1)]
