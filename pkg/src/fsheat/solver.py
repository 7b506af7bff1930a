"""Picard iteration for the mild solution, plus verification harnesses.

The fixed-point map is

    u(., t) = G*phi + int_0^t G f(u) ds + sum_j sqrt(lambda_j) int_0^t (G h(u) e_j) dB_j(s)

on the grid.  The drift integral uses the trapezoid rule in time, the noise
integral the left-point Young sum.  Because every term is a sum of
propagated slices, one map application is the forward recursion

    out_m = P_m (out_{m-1} + dt/2 f(u_{m-1}) + h(u_{m-1}) dW_{m-1}) + dt/2 f(u_m)

with ``out_0 = phi`` and ``dW_m = sum_j sqrt(lambda_j) e_j (B_j(t_{m+1}) - B_j(t_m))``.
:func:`mild_rhs_direct` evaluates the same map from materialised kernels and
per-mode Young sums and serves as the independent check.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import kernels
from .errors import DomainError, PicardDivergence
from .fbm import check_alpha, check_hurst
from .fractional import Field, h1_integral, norm_alpha1, norm_alpha2, norm_sup, young_integral
from .green import GreenTable, build_propagator
from .grids import SpaceGrid, TimeGrid
from .noise import NoiseBasis, NoiseField, build_noise, xi_statistic
from .presets import Coefficient, InitialPreset, ScalarPreset

__all__ = [
    "ProblemSpec",
    "SolverReport",
    "MildMap",
    "picard_solve",
    "solve",
    "mild_rhs_direct",
    "fixed_point_residual",
    "apriori_check",
    "fit_apriori_envelope",
    "run_ensemble",
    "moment_estimate",
    "uniqueness_check",
]

log = logging.getLogger(__name__)

WORKERS_ENV = "FSHEAT_WORKERS"


@dataclass(frozen=True)
class ProblemSpec:
    k: Coefficient = Coefficient()
    f: ScalarPreset = ScalarPreset()
    h: ScalarPreset = ScalarPreset()
    phi: InitialPreset = InitialPreset()
    hurst: float = 0.7
    alpha: float = 0.35
    nx: int = 64
    nt: int = 256
    T: float = 0.5
    modes: int = 16
    gamma: float = 3.0
    scale: float = 1.0
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 50

    def __post_init__(self):
        check_hurst(self.hurst)
        check_alpha(self.alpha, self.hurst)
        if not self.tol > 0:
            raise DomainError(f"tolerance must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise DomainError(f"max_iter must be a positive integer, got {self.max_iter}")
        self.basis  # validates modes / gamma / scale

    @property
    def space(self) -> SpaceGrid:
        return SpaceGrid(self.nx)

    @property
    def time(self) -> TimeGrid:
        return TimeGrid(self.T, self.nt)

    @property
    def basis(self) -> NoiseBasis:
        return NoiseBasis(self.space, self.modes, self.gamma, self.scale)

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    def noise(self, seed: int | None = None, spawn_prefix: tuple = ()) -> NoiseField:
        return build_noise(self.basis, self.time, self.hurst, self.alpha,
                           self.seed if seed is None else seed, spawn_prefix)

    def green(self) -> GreenTable:
        return build_propagator(self.k, self.space, self.time)

    # shipped presets ------------------------------------------------------
    @classmethod
    def heat_decay(cls, **kw) -> "ProblemSpec":
        """``k = 1``, no forcing, ``phi = cos(pi x)``: exact solution ``exp(-pi^2 t) cos(pi x)``."""
        return cls(**kw)

    @classmethod
    def nonlinear(cls, **kw) -> "ProblemSpec":
        base = dict(
            k=Coefficient("variable"),
            f=ScalarPreset("sin"),
            h=ScalarPreset("sin"),
            phi=InitialPreset("cos"),
        )
        base.update(kw)
        return cls(**base)

    @classmethod
    def additive(cls, sigma: float = 1.0, **kw) -> "ProblemSpec":
        """Single flat mode, ``h = sigma``, ``f = 0``, ``phi = 0``: solution ``sigma B(t)``."""
        base = dict(h=ScalarPreset("constant", {"value": sigma}), phi=InitialPreset("zero"), modes=1)
        base.update(kw)
        return cls(**base)


@dataclass
class SolverReport:
    iterations: int
    deltas: list
    converged: bool
    tol: float
    norm_alpha_inf: float = float("nan")
    norm_alpha1: float = float("nan")
    norm_sup: float = float("nan")
    norm_alpha2: float = float("nan")
    h1_integral: float = float("nan")
    xi: float = float("nan")
    contraction_rate: float = float("nan")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _contraction_rate(deltas: Sequence[float]) -> float:
    d = np.asarray(deltas, dtype=float)
    if d.size < 2:
        return float("nan")
    prev, nxt = d[:-1], d[1:]
    ok = prev > 0
    if not ok.any():
        return 0.0
    r = nxt[ok] / prev[ok]
    return float(np.median(r[len(r) // 2 :]))


class MildMap:
    """The discrete fixed-point map for one noise realisation."""

    def __init__(self, spec: ProblemSpec, noise: NoiseField, green: GreenTable):
        if green.space != noise.space or green.time != noise.grid:
            raise DomainError("noise and propagator live on different grids")
        if green.space != spec.space or green.time != spec.time:
            raise DomainError("propagator grid does not match the problem grid")
        self.spec, self.noise, self.green = spec, noise, green
        self.space, self.time = green.space, green.time
        self.steps = np.ascontiguousarray(green.steps)
        self.phi = spec.phi(self.space.x)
        self.dt = self.time.dt
        self.stochastic = not spec.h.is_zero
        self._zeros = np.zeros((self.time.nt + 1, self.space.size))

    def initial_term(self) -> np.ndarray:
        """``G*phi`` at every grid time."""
        return kernels.volterra_sweep(self.steps, self.phi, self._zeros[:-1], self._zeros)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        half = 0.5 * self.dt * self.spec.f(values)
        left = half[:-1].copy()
        if self.stochastic:
            left += self.spec.h(values[:-1]) * self.noise.increments
        return kernels.volterra_sweep(self.steps, self.phi, left, half)


def _as_values(start, mmap: MildMap) -> np.ndarray:
    shape = (mmap.time.nt + 1, mmap.space.size)
    if start is None:
        return mmap.initial_term()
    if isinstance(start, Field):
        return np.array(start.values)
    arr = np.asarray(start, dtype=float)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    return np.broadcast_to(arr, shape).copy()


def picard_solve(
    spec: ProblemSpec,
    noise: NoiseField,
    green: GreenTable,
    start=None,
) -> tuple[Field, SolverReport]:
    """Iterate the mild map from ``start`` until the sup-norm update is ``<= spec.tol``.

    ``start`` may be ``None`` (``G*phi``), a :class:`Field`, an array or a scalar.
    Raises :class:`PicardDivergence` carrying the delta history when the
    iteration budget runs out or an iterate stops being finite.
    """
    mmap = MildMap(spec, noise, green)
    if spec.T == 0.0:
        vals = np.tile(mmap.phi, (spec.nt + 1, 1))
        u = Field(mmap.space, mmap.time, vals)
        rep = SolverReport(0, [], True, spec.tol, norm_sup=float(np.abs(vals).max()),
                           norm_alpha1=0.0, xi=1.0)
        rep.norm_alpha_inf = rep.norm_sup
        rep.norm_alpha2 = float(np.sqrt((mmap.phi**2) @ mmap.space.weights))
        rep.h1_integral = 0.0
        return u, rep

    u = _as_values(start, mmap)
    deltas: list[float] = []
    converged = False
    for it in range(1, spec.max_iter + 1):
        new = mmap(u)
        if not np.all(np.isfinite(new)):
            deltas.append(float("inf"))
            break
        delta = float(np.abs(new - u).max())
        deltas.append(delta)
        u = new
        if delta <= spec.tol:
            converged = True
            break
    report = SolverReport(len(deltas), deltas, converged, spec.tol,
                          contraction_rate=_contraction_rate(deltas))
    if not converged:
        raise PicardDivergence(report)
    field_ = Field(mmap.space, mmap.time, u)
    report.norm_sup = norm_sup(field_)
    report.norm_alpha1 = norm_alpha1(field_, spec.alpha)
    report.norm_alpha_inf = report.norm_sup + report.norm_alpha1
    report.norm_alpha2 = norm_alpha2(field_, spec.alpha)
    report.h1_integral = h1_integral(field_)
    report.xi = xi_statistic(noise, spec.T)
    return field_, report


def solve(spec: ProblemSpec, seed: int | None = None, start=None) -> tuple[Field, SolverReport]:
    return picard_solve(spec, spec.noise(seed), spec.green(), start)


# --------------------------------------------------------------------------- #
# independent evaluation of the map
# --------------------------------------------------------------------------- #
def mild_rhs_direct(
    spec: ProblemSpec, noise: NoiseField, green: GreenTable, u: Field, targets: Sequence[int]
) -> dict:
    """Right side of the mild equation at grid indices ``targets`` from explicit kernels.

    Every ``G(., t_m; ., t_l)`` is assembled as a matrix product and the noise
    term is summed mode by mode with :func:`young_integral`.  Cost is
    ``O(m n^3)`` per target, so keep grids small or targets few.
    """
    w = green.space.weights
    n = green.n
    phi = spec.phi(green.space.x)
    fu = spec.f(u.values)
    hu = spec.h(u.values)
    E = noise.basis.matrix
    dt = green.time.dt
    out = {}
    for m in targets:
        m = int(m)
        if m == 0:
            out[0] = phi.copy()
            continue
        # props[l] = P_m ... P_{l+1}, a full (n, n) propagator
        props = np.empty((m + 1, n, n))
        props[m] = np.eye(n)
        for l in range(m - 1, -1, -1):
            props[l] = props[l + 1] @ green.steps[l]
        K = props / w[None, None, :]
        first = np.einsum("ij,j,j->i", K[0], phi, w)
        pushed_f = np.einsum("lij,lj,j->li", K, fu[: m + 1], w)
        drift = 0.5 * dt * (pushed_f[:-1] + pushed_f[1:]).sum(axis=0)
        noise_term = np.zeros(n)
        if not spec.h.is_zero:
            psi_full = np.zeros((green.time.nt + 1, n))
            for j, path in enumerate(noise.paths):
                psi_full[: m] = np.einsum("lij,lj,j->li", K[:m], hu[:m] * E[j], w)
                noise_term += noise.basis.sqrt_weights[j] * young_integral(psi_full, path, 0.0, green.time.times[m])
        out[m] = first + drift + noise_term
    return out


def fixed_point_residual(
    spec: ProblemSpec,
    noise: NoiseField,
    green: GreenTable,
    u: Field,
    direct_targets: Sequence[int] = (),
) -> dict:
    """Sup-norm residual ``|Phi(u) - u|`` via the recursion and, optionally, the direct route."""
    mmap = MildMap(spec, noise, green)
    res = {"recursive": float(np.abs(mmap(u.values) - u.values).max())}
    if direct_targets:
        rhs = mild_rhs_direct(spec, noise, green, u, direct_targets)
        res["direct"] = float(max(np.abs(v - u.values[m]).max() for m, v in rhs.items()))
        res["direct_targets"] = [int(m) for m in direct_targets]
    return res


# --------------------------------------------------------------------------- #
# a priori envelope, ensembles, moments
# --------------------------------------------------------------------------- #
def apriori_check(u: Field, report: SolverReport, alpha: float, envelope: "EnvelopeFit | None" = None):
    """``(||u||_{alpha,inf,T}, xi, passed)``; ``passed`` is None without a fitted envelope."""
    lhs = norm_sup(u) + norm_alpha1(u, alpha)
    xi = report.xi
    passed = None if envelope is None else envelope.dominates(lhs, xi)
    return lhs, xi, passed


@dataclass
class EnvelopeFit:
    c0: float
    c1: float
    alpha: float
    violations: int
    violation_fraction: float
    spearman: float
    n: int

    def bound(self, xi) -> np.ndarray:
        return self.c0 + self.c1 * np.asarray(xi, float) ** (1.0 / (1.0 - self.alpha))

    def dominates(self, lhs: float, xi: float) -> bool:
        with np.errstate(divide="ignore"):
            return bool(np.log(lhs) <= self.bound(xi) + 1e-12)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def fit_apriori_envelope(lhs: Sequence[float], xi: Sequence[float], alpha: float) -> EnvelopeFit:
    """Fit ``log lhs <= c0 + c1 xi^(1/(1-alpha))``.

    ``c1`` is the least-squares slope clipped at zero, ``c0`` the smallest
    intercept that puts every sample under the curve.
    """
    lhs = np.asarray(lhs, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if lhs.size == 0 or lhs.size != xi.size:
        raise DomainError("need matching, non-empty lhs and xi samples")
    with np.errstate(divide="ignore"):
        y = np.log(lhs)
    X = xi ** (1.0 / (1.0 - alpha))
    keep = np.isfinite(y)
    if keep.sum() >= 2 and np.ptp(X[keep]) > 0:
        c1 = max(float(np.polyfit(X[keep], y[keep], 1)[0]), 0.0)
    else:
        c1 = 0.0
    c0 = float(np.max(y[keep] - c1 * X[keep])) if keep.any() else 0.0
    fit = EnvelopeFit(c0, c1, alpha, 0, 0.0, float("nan"), int(lhs.size))
    viol = sum(not fit.dominates(a, b) for a, b in zip(lhs, xi))
    fit.violations = int(viol)
    fit.violation_fraction = viol / lhs.size
    if lhs.size >= 3 and np.ptp(lhs) > 0 and np.ptp(xi) > 0:
        fit.spearman = float(stats.spearmanr(lhs, xi).statistic)
    return fit


@dataclass
class MemberResult:
    index: int
    converged: bool
    iterations: int
    sup_abs: float = float("nan")
    lhs: float = float("nan")
    xi: float = float("nan")
    norm_alpha1: float = float("nan")
    residual: float = float("nan")
    error: str = ""


def _solve_member(spec: ProblemSpec, green: GreenTable, i: int) -> MemberResult:
    noise = spec.noise(spawn_prefix=(i,))
    try:
        u, rep = picard_solve(spec, noise, green)
    except PicardDivergence as exc:
        return MemberResult(i, False, exc.report.iterations, error=str(exc))
    res = fixed_point_residual(spec, noise, green, u)["recursive"]
    return MemberResult(i, True, rep.iterations, rep.norm_sup, rep.norm_alpha_inf, rep.xi, rep.norm_alpha1, res)


def _solve_shard(spec: ProblemSpec, indices: Sequence[int]) -> list:
    green = spec.green()
    return [_solve_member(spec, green, i) for i in indices]


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def run_ensemble(spec: ProblemSpec, n: int, workers: int | None = None, first: int = 0) -> list:
    """Solve members ``first ... first+n-1``; member ``i`` draws noise stream prefix ``(i,)``.

    Members are split into contiguous shards, one per worker, and results are
    returned in member order, so the output never depends on the worker count.
    """
    idx = list(range(first, first + n))
    nw = min(_workers(workers), max(1, n))
    if nw == 1:
        return _solve_shard(spec, idx)
    shards = [list(s) for s in np.array_split(idx, nw) if len(s)]
    with ProcessPoolExecutor(max_workers=nw) as ex:
        parts = list(ex.map(_solve_shard, [spec] * len(shards), shards))
    return sorted((r for part in parts for r in part), key=lambda r: r.index)


@dataclass
class MomentEstimate:
    p: float
    n: int
    n_used: int
    n_excluded: int
    exclusion_fraction: float
    mean: float
    se: float
    ci: tuple
    half_mean: float
    half_se: float
    pooled_se: float
    stable: bool
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _boot_ci(x: np.ndarray, n_boot: int, level: float, seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    means = x[rng.integers(0, x.size, size=(n_boot, x.size))].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def moment_estimate(
    spec: ProblemSpec,
    n: int,
    p: float,
    members: Sequence[MemberResult] | None = None,
    workers: int | None = None,
    n_boot: int = 2000,
    level: float = 0.95,
    boot_seed: int = 0,
) -> MomentEstimate:
    """Monte Carlo ``E (sup |u|)^p`` with a percentile bootstrap interval.

    The stability diagnostic compares the full-sample mean with the mean of
    the first ``n // 2`` members, in units of the pooled standard error
    ``sqrt(se_n^2 + se_{n/2}^2)``.
    """
    if n < 30:
        raise DomainError(f"moment estimates need n >= 30, got {n}")
    if not p > 0:
        raise DomainError(f"p must be positive, got {p}")
    if members is None:
        members = run_ensemble(spec, n, workers)
    members = list(members)[:n]
    ok = [m for m in members if m.converged]
    excluded = [m.index for m in members if not m.converged]
    x = np.array([m.sup_abs for m in ok]) ** p
    if x.size < 2:
        raise DomainError("fewer than two converged members")
    half = np.array([m.sup_abs for m in ok if m.index < members[0].index + n // 2]) ** p
    mean, se = float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))
    hmean, hse = float(half.mean()), float(half.std(ddof=1) / np.sqrt(half.size))
    pooled = float(np.hypot(se, hse))
    return MomentEstimate(
        p=p, n=n, n_used=int(x.size), n_excluded=len(excluded),
        exclusion_fraction=len(excluded) / n, mean=mean, se=se,
        ci=_boot_ci(x, n_boot, level, boot_seed), half_mean=hmean, half_se=hse,
        pooled_se=pooled, stable=bool(abs(mean - hmean) <= 3 * pooled), excluded=excluded,
    )


@dataclass
class UniquenessResult:
    sup_gap: float
    alpha_inf_gap: float
    eta: float
    reports: list

    def to_dict(self) -> dict:
        return {
            "sup_gap": self.sup_gap,
            "alpha_inf_gap": self.alpha_inf_gap,
            "eta": self.eta,
            "reports": [r.to_dict() for r in self.reports],
        }


def uniqueness_check(
    spec: ProblemSpec,
    noise: NoiseField,
    green: GreenTable,
    starts: Sequence | None = None,
) -> UniquenessResult:
    """Solve from several starts (default ``0`` and ``G*phi``) and measure the gaps.

    Gaps are the largest pairwise distance to the first solution.  ``eta`` is
    ``1 + ||u||_{alpha,1,T} + ||v||_{alpha,1,T}`` for the first two solutions.
    """
    starts = [0.0, None] if starts is None else list(starts)
    if len(starts) < 2:
        raise DomainError("need at least two starts")
    sols, reps = [], []
    for s in starts:
        u, r = picard_solve(spec, noise, green, s)
        sols.append(u)
        reps.append(r)
    ref = sols[0]
    sup_gap = max(norm_sup(u - ref) for u in sols[1:])
    a_gap = max(norm_sup(u - ref) + norm_alpha1(u - ref, spec.alpha) for u in sols[1:])
    eta = 1.0 + reps[0].norm_alpha1 + reps[1].norm_alpha1
    return UniquenessResult(sup_gap, a_gap, eta, reps)
