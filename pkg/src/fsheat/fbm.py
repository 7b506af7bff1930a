"""Exact fractional Brownian motion on a uniform time grid.

Paths are synthesised from fractional Gaussian noise by circulant embedding
(Davies-Harte).  If the embedding has a negative eigenvalue the increments are
drawn from the Cholesky factor of their Toeplitz covariance instead; both
routes are exact in law.

Random streams
--------------
Path ``k`` of a call with seed ``s`` and prefix ``p`` draws from
``PCG64(SeedSequence(s, spawn_key=p + (k,)))``.  A path therefore depends on
``(s, p, k, grid, H)`` only and never on how many paths were requested.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, toeplitz

from . import kernels
from .errors import DomainError
from .grids import TimeGrid

__all__ = [
    "FbmPath",
    "check_hurst",
    "check_alpha",
    "fbm_covariance",
    "fgn_autocovariance",
    "generate_paths",
    "generate_path_array",
    "cholesky_path_array",
    "seminorm_alpha0",
    "write_paths_csv",
]

_NEG_EIG_TOL = 1e-12


def check_hurst(H: float, allow_brownian: bool = False) -> float:
    """Validate a Hurst index for the SPDE setting, ``1/2 < H < 1``."""
    H = float(H)
    lo_ok = H >= 0.5 if allow_brownian else H > 0.5
    if not (lo_ok and H < 1.0):
        bound = "[1/2, 1)" if allow_brownian else "(1/2, 1)"
        raise DomainError(f"Hurst index must lie in {bound}, got {H}")
    return H


def check_alpha(alpha: float, H: float) -> float:
    """Validate ``alpha`` against the window ``(1 - H, 1/2)``."""
    alpha = float(alpha)
    if not (1.0 - H < alpha < 0.5):
        raise DomainError(
            f"alpha must lie in (1-H, 1/2) = ({1.0 - H:.6g}, 0.5) for H={H}, got {alpha}"
        )
    return alpha


def fbm_covariance(s, t, H: float):
    """Covariance ``E[B(s) B(t)] = (t^2H + s^2H - |t-s|^2H) / 2`` with ``Var B(1) = 1``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("fBm covariance is defined for non-negative times only")
    if not 0.0 < H < 1.0:
        raise DomainError(f"Hurst index must lie in (0, 1), got {H}")
    h2 = 2.0 * H
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(n: int, H: float) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags ``0..n``."""
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * H
    return 0.5 * ((k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)


@dataclass(frozen=True)
class FbmPath:
    """One sample path ``B(t_m)``; ``values[0] == 0``."""

    grid: TimeGrid
    values: np.ndarray
    hurst: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.nt + 1,):
            raise DomainError(f"path needs {self.grid.nt + 1} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def seminorm(self, alpha: float, t: float | None = None) -> float:
        return seminorm_alpha0(self, alpha, self.grid.T if t is None else t)

    def scaled(self, c: float) -> "FbmPath":
        return FbmPath(self.grid, c * self.values, self.hurst)


# paths per FFT batch; bounds the temporary at a few MB
_CHUNK = 4096


def _stream(seed: int, key: tuple) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def _circulant_sqrt_eigs(n: int, H: float):
    """Return ``sqrt(lambda / M)`` for the size ``M = 2n`` embedding, or None."""
    gamma = fgn_autocovariance(n, H)
    row = np.concatenate([gamma, gamma[n - 1 : 0 : -1]])
    eig = np.fft.fft(row).real
    if eig.min() < -_NEG_EIG_TOL * max(1.0, eig.max()):
        return None
    return np.sqrt(np.clip(eig, 0.0, None) / row.size)


def _circulant_transform(z_re: np.ndarray, z_im: np.ndarray, sqrt_eig: np.ndarray, n: int):
    """Map standard normals (``(..., 2n)`` each) to unit-step fGn of length ``n``."""
    y = np.fft.fft(sqrt_eig * (z_re + 1j * z_im), axis=-1)
    return y.real[..., :n]


def generate_path_array(
    grid: TimeGrid,
    H: float,
    count: int,
    seed: int,
    spawn_prefix: tuple = (),
    method: str = "auto",
) -> np.ndarray:
    """Sample ``count`` independent fBm paths as an array of shape ``(count, nt+1)``.

    Parameters
    ----------
    grid : TimeGrid
        Uniform grid; paths are evaluated at ``grid.times``.
    H : float
        Hurst index in ``[1/2, 1)`` (the Brownian case is allowed for testing).
    count : int
        Number of paths.
    seed : int
        64-bit master seed.
    spawn_prefix : tuple of int
        Prepended to the per-path counter; lets ensembles carve disjoint streams.
    method : {"auto", "circulant", "cholesky"}
        ``auto`` uses circulant embedding and falls back to Cholesky when the
        embedding is not nonnegative definite.
    """
    H = check_hurst(H, allow_brownian=True)
    if count < 1:
        raise DomainError(f"count must be positive, got {count}")
    n = grid.nt
    scale = grid.dt**H
    sqrt_eig = None
    if method in ("auto", "circulant"):
        sqrt_eig = _circulant_sqrt_eigs(n, H)
        if sqrt_eig is None and method == "circulant":
            raise DomainError(f"circulant embedding is not nonnegative definite for H={H}, n={n}")
    elif method != "cholesky":
        raise DomainError(f"unknown synthesis method {method!r}")

    incr = np.empty((count, n))
    if sqrt_eig is not None:
        for lo in range(0, count, _CHUNK):
            hi = min(lo + _CHUNK, count)
            z = np.empty((hi - lo, 2, 2 * n))
            for k in range(lo, hi):
                z[k - lo] = _stream(seed, tuple(spawn_prefix) + (k,)).standard_normal((2, 2 * n))
            incr[lo:hi] = _circulant_transform(z[:, 0], z[:, 1], sqrt_eig, n)
    else:
        chol = cholesky(toeplitz(fgn_autocovariance(n - 1, H)), lower=True)
        for k in range(count):
            incr[k] = chol @ _stream(seed, tuple(spawn_prefix) + (k,)).standard_normal(n)

    paths = np.zeros((count, n + 1))
    np.cumsum(incr * scale, axis=1, out=paths[:, 1:])
    return paths


def cholesky_path_array(grid: TimeGrid, H: float, count: int, seed: int) -> np.ndarray:
    """Reference sampler: Cholesky factor of the covariance of ``B(t_1..t_n)``."""
    t = grid.times[1:]
    cov = fbm_covariance(t[:, None], t[None, :], H)
    chol = cholesky(cov, lower=True)
    rng = np.random.default_rng(seed)
    paths = np.zeros((count, grid.nt + 1))
    paths[:, 1:] = rng.standard_normal((count, grid.nt)) @ chol.T
    return paths


def generate_paths(
    grid: TimeGrid, H: float, count: int, seed: int, spawn_prefix: tuple = ()
) -> list[FbmPath]:
    """Sample ``count`` independent :class:`FbmPath` objects (see :func:`generate_path_array`)."""
    arr = generate_path_array(grid, H, count, seed, spawn_prefix)
    return [FbmPath(grid, row, H) for row in arr]


def seminorm_alpha0(path: FbmPath, alpha: float, t: float) -> float:
    r"""Discrete :math:`\|f\|_{\alpha,0,t}`.

    The supremum runs over grid pairs ``u < v <= t`` (the closed endpoint
    gives the same supremum for continuous ``f``); the inner singular integral
    drops the cell touching ``z = u`` and uses left endpoints elsewhere.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    m = path.grid.index(t)
    if m == 0 or path.grid.dt == 0:
        raise DomainError("seminorm needs t > 0")
    return kernels.seminorm(path.values, alpha, path.grid.dt, m)


def write_paths_csv(paths: Sequence[FbmPath], fh) -> None:
    """Write ``t,path_0,...,path_{k-1}`` rows at 17 significant digits."""
    if not paths:
        raise DomainError("no paths to write")
    grid = paths[0].grid
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t"] + [f"path_{k}" for k in range(len(paths))])
    cols = np.vstack([grid.times] + [p.values for p in paths]).T
    for row in cols:
        w.writerow([f"{v:.16e}" for v in row])
