"""Fractional norms of space-time fields, Young sums and the integral envelope.

All singular time integrals share one rule: the grid cell touching the
singularity is dropped and every other cell contributes its left-endpoint
value times ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

from . import kernels
from .errors import DomainError
from .fbm import FbmPath
from .grids import SpaceGrid, TimeGrid

__all__ = [
    "Field",
    "NormReport",
    "norm_sup",
    "norm_alpha1",
    "norm_alpha_inf",
    "norm_alpha2",
    "h1_integral",
    "norm_report",
    "young_integral",
    "bound_rhs",
    "beta_identities_check",
]


@dataclass(frozen=True)
class Field:
    """Values ``u(x_i, t_m)`` stored time-major, shape ``(nt+1, nx+1)``."""

    space: SpaceGrid
    time: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.time.nt + 1, self.space.size):
            raise DomainError(
                f"field shape {v.shape} does not match grids ({self.time.nt + 1}, {self.space.size})"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("field has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.space, self.time, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.space, self.time, self.values - other.values)

    def scaled(self, c: float) -> "Field":
        return Field(self.space, self.time, c * self.values)

    def at(self, t: float) -> np.ndarray:
        return self.values[self.time.index(t)]


def _upto(u: Field, t: float | None) -> int:
    return u.time.nt if t is None else u.time.index(t)


def norm_sup(u: Field, t: float | None = None) -> float:
    """Running sup norm ``sup_{s<=t} sup_x |u(x, s)|``."""
    m = _upto(u, t)
    return float(np.abs(u.values[: m + 1]).max())


def norm_alpha1(u: Field, alpha: float, t: float | None = None) -> float:
    r"""``sup_x sup_{s<=t} sum_{v <= s - 2dt} |u(x,s) - u(x,v)| (s-v)^{-alpha-1} dt``."""
    m = _upto(u, t)
    if u.time.dt == 0 or m < 2:
        return 0.0
    prof = kernels.alpha1_profile(u.values[: m + 1], alpha, u.time.dt)
    return float(prof.max())


def norm_alpha_inf(u: Field, alpha: float, t: float | None = None) -> float:
    return norm_sup(u, t) + norm_alpha1(u, alpha, t)


def norm_alpha2(u: Field, alpha: float, t: float | None = None) -> float:
    """L2-in-space counterpart; the outer time integral is a left-point sum."""
    m = _upto(u, t)
    w = u.space.weights
    sq = (u.values[: m + 1] ** 2) @ w
    first = float(sq.max())
    if u.time.dt == 0 or m < 2:
        return first**0.5
    inner = kernels.alpha2_inner(u.values[: m + 1], w, alpha, u.time.dt)
    return float(first + u.time.dt * np.sum(inner[:m] ** 2)) ** 0.5


def h1_integral(u: Field, t: float | None = None) -> float:
    """Discrete ``int_0^t (||u||_2^2 + ||u_x||_2^2) dt`` (trapezoid in time)."""
    m = _upto(u, t)
    v = u.values[: m + 1]
    l2 = (v**2) @ u.space.weights
    grad = np.sum(np.diff(v, axis=1) ** 2, axis=1) / u.space.dx
    integrand = l2 + grad
    if m == 0:
        return 0.0
    return float(np.trapezoid(integrand, dx=u.time.dt))


@dataclass
class NormReport:
    times: list
    sup: list
    alpha1: list
    alpha_inf: list
    alpha2: list

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "sup": self.sup,
            "alpha1": self.alpha1,
            "alpha_inf": self.alpha_inf,
            "alpha2": self.alpha2,
        }


def norm_report(u: Field, alpha: float, times: Sequence[float] | None = None) -> NormReport:
    times = list(u.time.times) if times is None else [float(t) for t in times]
    idx = [u.time.index(t) for t in times]
    dt = u.time.dt
    sup_run = np.maximum.accumulate(np.abs(u.values).max(axis=1))
    if dt > 0 and u.time.nt >= 2:
        a1_run = np.maximum.accumulate(kernels.alpha1_profile(u.values, alpha, dt))
        inner = kernels.alpha2_inner(u.values, u.space.weights, alpha, dt)
    else:
        a1_run = np.zeros(u.time.nt + 1)
        inner = np.zeros(u.time.nt + 1)
    sq_run = np.maximum.accumulate((u.values**2) @ u.space.weights)
    cum = np.concatenate([[0.0], np.cumsum(dt * inner[:-1] ** 2)])
    a2 = np.sqrt(sq_run + cum)
    return NormReport(
        times=times,
        sup=[float(sup_run[m]) for m in idx],
        alpha1=[float(a1_run[m]) for m in idx],
        alpha_inf=[float(sup_run[m] + a1_run[m]) for m in idx],
        alpha2=[float(a2[m]) for m in idx],
    )


def _window(grid: TimeGrid, a: float, b: float) -> tuple[int, int]:
    ia, ib = grid.index(a), grid.index(b)
    if not ia < ib:
        raise DomainError(f"window needs a < b, got [{a}, {b}]")
    return ia, ib


def young_integral(psi, path: FbmPath, a: float, b: float):
    """Left-point Riemann-Stieltjes sum ``sum_m psi(s_m) (B(s_{m+1}) - B(s_m))`` over ``[a, b]``.

    ``psi`` holds integrand values at every grid time (leading axis ``nt+1``);
    trailing axes, e.g. space, are carried through.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape[0] != path.grid.nt + 1:
        raise DomainError("integrand must be sampled at every grid time")
    ia, ib = _window(path.grid, a, b)
    db = np.diff(path.values[ia : ib + 1])
    return np.tensordot(db, psi[ia:ib], axes=(0, 0))


def bound_rhs(psi, seminorm: float, alpha: float, grid: TimeGrid, a: float, b: float) -> float:
    """Envelope ``||B||_{alpha,0,b} int_a^b (|psi(s)| (s-a)^-alpha + int_a^s |psi(s)-psi(v)| (s-v)^(-alpha-1) dv) ds``.

    ``seminorm`` is the path's alpha-0 seminorm on ``[0, b]``; ``psi`` is a
    scalar integrand sampled at every grid time.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 1 or psi.shape[0] != grid.nt + 1:
        raise DomainError("bound_rhs takes a scalar integrand sampled at every grid time")
    ia, ib = _window(grid, a, b)
    return float(seminorm) * kernels.envelope(psi, alpha, grid.dt, ia, ib)


def beta_identities_check(a: float, b: float, v: float, t: float) -> tuple[float, float, float, float]:
    r"""Quadrature check of the two beta-function formulas.

    Returns ``(lhs1, rhs1, lhs2, rhs2)`` with

    * ``lhs1 = int_v^t (t-s)^(a-1) (s-v)^(b-1) ds``, ``rhs1 = B(a,b) (t-v)^(a+b-1)``
    * ``lhs2 = int_0^v (t-s)^(-a-b) (v-s)^(b-1) ds``, ``rhs2 = B(a,b) (t-v)^(-a)``

    The first integral uses QUADPACK's algebraic-endpoint weight.  The second
    is mapped by ``z = (v-s)/(t-v)`` onto ``int_0^Z z^(b-1) (1+z)^(-a-b) dz``,
    whose weak singularity at ``z = 0`` is handled the same way.
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0 <= v < t:
        raise DomainError(f"need 0 <= v < t, got v={v}, t={t}")
    beta = special.beta(a, b)
    lhs1, _ = integrate.quad(lambda s: 1.0, v, t, weight="alg", wvar=(b - 1.0, a - 1.0),
                             epsabs=0.0, epsrel=1e-13, limit=200)
    rhs1 = beta * (t - v) ** (a + b - 1.0)
    lhs2 = 0.0
    if v > 0:
        Z = v / (t - v)
        g = lambda z: (1.0 + z) ** (-a - b)
        head = min(Z, 1.0)
        part, _ = integrate.quad(g, 0.0, head, weight="alg", wvar=(b - 1.0, 0.0),
                                 epsabs=0.0, epsrel=1e-13, limit=200)
        if Z > 1.0:
            # z = exp(w) keeps the slowly decaying tail smooth
            tail, _ = integrate.quad(lambda w: np.exp(b * w) * g(np.exp(w)), 0.0, np.log(Z),
                                     epsabs=0.0, epsrel=1e-12, limit=500)
            part += tail
        lhs2 = (t - v) ** (-a) * part
    rhs2 = beta * (t - v) ** (-a)
    return float(lhs1), float(rhs1), float(lhs2), float(rhs2)
