"""L2(0,1)-valued fractional noise built from a cosine basis.

``W(x, t) = sum_j sqrt(lambda_j) e_j(x) B_j(t)`` truncated at ``J`` modes, with
the Neumann eigenbasis ``e_1 = 1``, ``e_j = sqrt(2) cos((j-1) pi x)`` and
weights ``lambda_j = scale * j**(-gamma)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError
from .fbm import FbmPath, check_alpha, check_hurst, generate_path_array, seminorm_alpha0
from .grids import SpaceGrid, TimeGrid

__all__ = ["NoiseBasis", "NoiseField", "build_noise", "evaluate_W", "xi_statistic"]


@dataclass(frozen=True)
class NoiseBasis:
    space: SpaceGrid
    modes: int = 16
    gamma: float = 3.0
    scale: float = 1.0

    def __post_init__(self):
        if int(self.modes) != self.modes or self.modes < 1:
            raise DomainError(f"modes must be a positive integer, got {self.modes}")
        if not self.gamma > 2.0:
            raise DomainError(f"lambda_gamma must exceed 2, got {self.gamma}")
        if not self.scale > 0.0:
            raise DomainError(f"weight scale must be positive, got {self.scale}")
        object.__setattr__(self, "modes", int(self.modes))

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.scale * np.arange(1, self.modes + 1, dtype=float) ** (-self.gamma)
        w.setflags(write=False)
        return w

    @cached_property
    def sqrt_weights(self) -> np.ndarray:
        w = np.sqrt(self.weights)
        w.setflags(write=False)
        return w

    @staticmethod
    def evaluate(j, x) -> np.ndarray:
        """``e_j(x)`` for 1-based mode indices ``j`` (broadcasting)."""
        j = np.asarray(j)
        x = np.asarray(x, dtype=float)
        return np.where(j == 1, 1.0, np.sqrt(2.0) * np.cos((j - 1) * np.pi * x))

    @cached_property
    def matrix(self) -> np.ndarray:
        """``E[j-1, i] = e_j(x_i)`` on the space grid."""
        j = np.arange(1, self.modes + 1)[:, None]
        e = self.evaluate(j, self.space.x[None, :])
        e.setflags(write=False)
        return e

    def gram(self) -> np.ndarray:
        """Trapezoid Gram matrix of the basis on the space grid."""
        return (self.matrix * self.space.weights) @ self.matrix.T


@dataclass(frozen=True)
class NoiseField:
    """A truncated noise realisation: basis, one fBm path per mode, and ``alpha``."""

    basis: NoiseBasis
    paths: tuple
    alpha: float

    def __post_init__(self):
        paths = tuple(self.paths)
        if len(paths) != self.basis.modes:
            raise DomainError(f"need {self.basis.modes} paths, got {len(paths)}")
        g0, h0 = paths[0].grid, paths[0].hurst
        if any(p.grid != g0 or p.hurst != h0 for p in paths):
            raise DomainError("all mode paths must share one time grid and Hurst index")
        check_alpha(self.alpha, h0)
        object.__setattr__(self, "paths", paths)

    @classmethod
    def zero(cls, basis: NoiseBasis, grid: TimeGrid, H: float, alpha: float) -> "NoiseField":
        zeros = np.zeros(grid.nt + 1)
        return cls(basis, tuple(FbmPath(grid, zeros, H) for _ in range(basis.modes)), alpha)

    @property
    def grid(self) -> TimeGrid:
        return self.paths[0].grid

    @property
    def space(self) -> SpaceGrid:
        return self.basis.space

    @property
    def hurst(self) -> float:
        return self.paths[0].hurst

    @cached_property
    def path_matrix(self) -> np.ndarray:
        """``B[j, m]``, shape ``(J, nt+1)``."""
        b = np.vstack([p.values for p in self.paths])
        b.setflags(write=False)
        return b

    @cached_property
    def values(self) -> np.ndarray:
        """``W(x_i, t_m)`` as an array of shape ``(nt+1, nx+1)``."""
        w = (self.path_matrix.T * self.basis.sqrt_weights) @ self.basis.matrix
        w.setflags(write=False)
        return w

    @cached_property
    def increments(self) -> np.ndarray:
        """``W(., t_{m+1}) - W(., t_m)`` summed mode by mode, shape ``(nt, nx+1)``."""
        db = np.diff(self.path_matrix, axis=1)
        d = (db.T * self.basis.sqrt_weights) @ self.basis.matrix
        d.setflags(write=False)
        return d


def build_noise(
    basis: NoiseBasis,
    grid: TimeGrid,
    H: float,
    alpha: float,
    seed: int,
    spawn_prefix: tuple = (),
) -> NoiseField:
    """Draw one fBm path per mode; mode ``j`` uses stream ``spawn_prefix + (j-1,)``."""
    H = check_hurst(H)
    check_alpha(alpha, H)
    arr = generate_path_array(grid, H, basis.modes, seed, spawn_prefix)
    return NoiseField(basis, tuple(FbmPath(grid, row, H) for row in arr), alpha)


def evaluate_W(field: NoiseField, x: float, t: float) -> float:
    i = field.space.index(x)
    m = field.grid.index(t)
    return float(field.values[m, i])


def xi_statistic(field: NoiseField, T: float) -> float:
    """``1 + sum_j sqrt(lambda_j) ||B_j||_{alpha,0,T}``."""
    m = field.grid.index(T)
    if m == 0:
        return 1.0
    semis = np.array([seminorm_alpha0(p, field.alpha, T) for p in field.paths])
    return float(1.0 + field.basis.sqrt_weights @ semis)
