"""Uniform space and time lattices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError

_SNAP = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_m = m * T / nt`` on ``[0, T]``.

    ``T = 0`` is accepted as a degenerate grid (every node at the origin);
    it only exists so that zero-horizon solves have a grid to live on.
    """

    T: float
    nt: int

    def __post_init__(self):
        if not isinstance(self.nt, (int, np.integer)) or self.nt < 1:
            raise DomainError(f"time steps must be a positive integer, got {self.nt!r}")
        if not np.isfinite(self.T) or self.T < 0:
            raise DomainError(f"horizon must be finite and non-negative, got {self.T!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "nt", int(self.nt))

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @cached_property
    def times(self) -> np.ndarray:
        return _readonly(np.arange(self.nt + 1) * self.dt)

    def index(self, t: float) -> int:
        """Index of grid time ``t``; raises :class:`DomainError` off grid."""
        if self.T == 0:
            if t == 0:
                return 0
            raise DomainError(f"t={t} is not on the degenerate grid")
        pos = t / self.dt
        m = int(round(pos))
        if abs(pos - m) > _SNAP * max(1.0, abs(pos)) or m < 0 or m > self.nt:
            raise DomainError(f"t={t} is not a node of the time grid (T={self.T}, nt={self.nt})")
        return m

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.nt * factor)


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid ``x_i = i / nx`` on ``[0, 1]``, both boundary nodes included."""

    nx: int

    def __post_init__(self):
        if not isinstance(self.nx, (int, np.integer)) or self.nx < 2:
            raise DomainError(f"space cells must be an integer >= 2, got {self.nx!r}")
        object.__setattr__(self, "nx", int(self.nx))

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def size(self) -> int:
        return self.nx + 1

    @cached_property
    def x(self) -> np.ndarray:
        return _readonly(np.arange(self.nx + 1) * self.dx)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights; they sum to one."""
        w = np.full(self.nx + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return _readonly(w)

    def index(self, x: float) -> int:
        pos = x * self.nx
        i = int(round(pos))
        if abs(pos - i) > _SNAP * max(1.0, abs(pos)) or i < 0 or i > self.nx:
            raise DomainError(f"x={x} is not a node of the space grid (nx={self.nx})")
        return i

    def refine(self, factor: int = 2) -> "SpaceGrid":
        return SpaceGrid(self.nx * factor)
