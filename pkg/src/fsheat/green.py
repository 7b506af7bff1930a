"""Discrete parabolic Green's function for ``u_t = (k(x,t) u_x)_x`` on (0, 1).

Scheme
------
Conservative second-order differences with ``k`` at half nodes and Neumann
closure by ghost-node reflection; Crank-Nicolson in time with ``k`` frozen at
the step midpoint.  One grid step ``t_{m-1} -> t_m`` is the composition of
``2**q`` Crank-Nicolson substeps, ``q`` being the smallest integer with
``h * k_max / dx**2 <= 1/2`` for the substep ``h``.  Under that restriction
every substep matrix is entrywise nonnegative and has positive spectrum, so
the discrete kernel is nonnegative and free of the undamped grid-scale modes
plain Crank-Nicolson leaves behind at large ``dt / dx**2``.

The one-step matrices ``P_m`` preserve constants and trapezoid mass exactly
(up to round-off).  The kernel is ``G(x_i, t_m; y_j, t_l) = (P_m ... P_{l+1})_{ij} / w_j``
with ``w`` the trapezoid weights, i.e. the propagated discrete delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError
from .grids import SpaceGrid, TimeGrid
from .presets import Coefficient

__all__ = [
    "GreenTable",
    "KernelEstimateReport",
    "ESTIMATES",
    "build_propagator",
    "green_apply",
    "spectral_kernel",
    "verify_convolution",
    "verify_convolution_spectral",
    "verify_kernel_estimate",
    "envelope_phi",
]

MIN_SECOND_ORDER_LAG = 10

ESTIMATES = ("gaus", "dG1", "dG2", "deltaG1", "deltaG", "deltaG2")


def _operator(kh: np.ndarray, dx: float) -> np.ndarray:
    """Dense Neumann operator from half-node conductivities ``kh`` (length nx)."""
    n = kh.size + 1
    L = np.zeros((n, n))
    c = kh / dx**2
    i = np.arange(1, n - 1)
    L[i, i - 1] = c[:-1]
    L[i, i + 1] = c[1:]
    L[i, i] = -(c[:-1] + c[1:])
    L[0, 0], L[0, 1] = -2 * c[0], 2 * c[0]
    L[-1, -1], L[-1, -2] = -2 * c[-1], 2 * c[-1]
    return L


def _step_matrix(L: np.ndarray, dt: float, q: int) -> np.ndarray:
    n = L.shape[0]
    if dt == 0.0:
        return np.eye(n)
    h = dt / 2**q
    eye = np.eye(n)
    P = np.linalg.solve(eye - 0.5 * h * L, eye + 0.5 * h * L)
    for _ in range(q):
        P = P @ P
    return P


@dataclass(frozen=True, eq=False)
class GreenTable:
    """Propagator factors on one space-time grid.

    ``steps[m-1]`` advances data from ``t_{m-1}`` to ``t_m``.
    """

    space: SpaceGrid
    time: TimeGrid
    coefficient: Coefficient
    steps: np.ndarray
    substeps: int
    k_lower: float
    k_upper: float

    @property
    def n(self) -> int:
        return self.space.size

    def propagate(self, g, l: int, m: int) -> np.ndarray:
        """Apply ``P_m ... P_{l+1}`` to ``g`` (vector or column stack)."""
        if not 0 <= l <= m <= self.time.nt:
            raise DomainError(f"bad propagation window {l} -> {m}")
        out = np.array(g, dtype=float)
        for k in range(l, m):
            out = self.steps[k] @ out
        return out

    def propagator(self, m: int, l: int) -> np.ndarray:
        return self.propagate(np.eye(self.n), l, m)

    def kernel(self, m: int, l: int) -> np.ndarray:
        """``G(x_i, t_m; y_j, t_l)`` for ``l < m`` as an ``(n, n)`` matrix."""
        if not l < m:
            raise DomainError("kernel needs l < m")
        return self.propagator(m, l) / self.space.weights[None, :]

    def kernels_from(self, l: int, targets: Iterable[int]) -> dict:
        """Kernels ``G(., t_m; ., t_l)`` for every ``m`` in ``targets`` (all ``> l``)."""
        targets = sorted(set(int(m) for m in targets))
        if targets and targets[0] <= l:
            raise DomainError("kernels_from needs targets after the source time")
        out = {}
        cur = np.diag(1.0 / self.space.weights)
        pos = l
        for m in targets:
            for k in range(pos, m):
                cur = self.steps[k] @ cur
            pos = m
            out[m] = cur.copy()
        return out

    def green(self, x: float, t: float, y: float, s: float) -> float:
        i, j = self.space.index(x), self.space.index(y)
        m, l = self.time.index(t), self.time.index(s)
        return float(self.propagate(np.eye(self.n)[:, j] / self.space.weights[j], l, m)[i])


def build_propagator(k: Coefficient, space: SpaceGrid, time: TimeGrid) -> GreenTable:
    """Assemble the one-step propagators; raises :class:`DomainError` if ``k`` is not elliptic."""
    dt, dx = time.dt, space.dx
    xh = (np.arange(space.nx) + 0.5) * dx
    tmid = (np.arange(time.nt) + 0.5) * dt
    kh = np.asarray(k(xh[None, :], tmid[:, None]), dtype=float) * np.ones((time.nt, 1))
    knode = np.asarray(k(space.x[None, :], time.times[:, None]), dtype=float) * np.ones((time.nt + 1, 1))
    k_lower = float(min(kh.min(), knode.min()))
    k_upper = float(max(kh.max(), knode.max()))
    if not np.all(np.isfinite(kh)) or not np.all(np.isfinite(knode)) or k_lower <= 0.0:
        raise DomainError(f"coefficient is not uniformly elliptic on the grid (min k = {k_lower:.6g})")

    ratio = dt * k_upper / dx**2
    q = 0 if ratio <= 0.5 else math.ceil(math.log2(ratio / 0.5))
    n = space.size
    if k.time_independent or dt == 0.0:
        P = _step_matrix(_operator(kh[0], dx), dt, q)
        steps = np.broadcast_to(P, (time.nt, n, n))
    else:
        steps = np.empty((time.nt, n, n))
        for m in range(time.nt):
            steps[m] = _step_matrix(_operator(kh[m], dx), dt, q)
        steps.setflags(write=False)
    return GreenTable(space, time, k, steps, 2**q, k_lower, k_upper)


def green_apply(table: GreenTable, g, s: float, t: float) -> np.ndarray:
    """``sum_j G(x_i, t; y_j, s) g(y_j) w_j`` evaluated by propagation."""
    l, m = table.time.index(s), table.time.index(t)
    if not l < m:
        raise DomainError(f"green_apply needs s < t, got s={s}, t={t}")
    g = np.asarray(g, dtype=float)
    if g.shape[0] != table.n:
        raise DomainError(f"slice has {g.shape[0]} nodes, grid has {table.n}")
    return table.propagate(g, l, m)


def spectral_kernel(x, t, y, s, tol: float = 1e-14) -> np.ndarray:
    """Neumann heat kernel for ``k = 1``: ``1 + 2 sum_n exp(-n^2 pi^2 tau) cos(n pi x) cos(n pi y)``.

    The cosine series is truncated once ``2 exp(-n^2 pi^2 tau) < tol``.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    tau = np.asarray(t, float) - np.asarray(s, float)
    if np.any(tau <= 0):
        raise DomainError("spectral kernel needs t > s")
    tmin = float(np.min(tau))
    nmax = int(math.ceil(math.sqrt(math.log(2.0 / tol) / (math.pi**2 * tmin)))) + 1
    out = np.ones(np.broadcast(x, y, tau).shape)
    for n in range(1, nmax + 1):
        out = out + 2.0 * np.exp(-(n * math.pi) ** 2 * tau) * np.cos(n * math.pi * x) * np.cos(n * math.pi * y)
    return out


def verify_convolution(table: GreenTable, samples: Sequence[tuple]) -> float:
    """Max over samples ``(x, t, y, s, sigma)`` of the discrete convolution defect."""
    if not samples:
        raise DomainError("empty sample")
    w = table.space.weights
    err = 0.0
    for x, t, y, s, sig in samples:
        i, j = table.space.index(x), table.space.index(y)
        m, l, p = table.time.index(t), table.time.index(s), table.time.index(sig)
        if not l < p < m:
            raise DomainError("convolution needs s < sigma < t")
        lhs = table.kernel(m, l)[i, j]
        rhs = np.sum(table.kernel(m, p)[i, :] * table.kernel(p, l)[:, j] * w)
        err = max(err, abs(lhs - rhs))
    return err


def verify_convolution_spectral(samples: Sequence[tuple], nz: int = 256, tol: float = 1e-14) -> float:
    """Same defect with the constant-coefficient spectral kernel and a trapezoid z-sum."""
    z = SpaceGrid(nz)
    err = 0.0
    for x, t, y, s, sig in samples:
        lhs = spectral_kernel(x, t, y, s, tol)
        rhs = np.sum(spectral_kernel(x, t, z.x, sig, tol) * spectral_kernel(z.x, sig, y, s, tol) * z.weights)
        err = max(err, abs(float(lhs) - float(rhs)))
    return err


# --------------------------------------------------------------------------- #
# envelope checks
# --------------------------------------------------------------------------- #
def envelope_phi(tau, z, decay: float):
    """``tau**(-1/2) * exp(-decay * z**2 / tau)`` (the d = 1 Gaussian envelope)."""
    tau = np.asarray(tau, float)
    return tau**-0.5 * np.exp(-decay * np.asarray(z, float) ** 2 / tau)


def _sup_phi(lo, hi, z, decay):
    # Phi(tau) peaks at tau = 2 * decay * z**2
    tau = np.clip(2.0 * decay * np.asarray(z, float) ** 2, lo, hi)
    return envelope_phi(tau, z, decay)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _double_envelope(r, v, s, t, z, decay):
    """Gauss-Legendre value of ``int_r^v int_s^t (th - ta)^-2 Phi(th - ta) dth dta``."""
    ta = 0.5 * (v - r) * _GL_X + 0.5 * (v + r)
    th = 0.5 * (t - s) * _GL_X + 0.5 * (t + s)
    d = th[None, :] - ta[:, None]
    vals = d**-2.0 * envelope_phi(d, z, decay)
    return float(0.25 * (v - r) * (t - s) * (_GL_W @ vals @ _GL_W))


@dataclass
class KernelEstimateReport:
    estimate: str
    params: dict
    C_fit: float
    max_ratio: float
    sample_size: int
    grid: dict
    sample: str = ""
    ratios: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "estimate_id": self.estimate,
            "params": self.params,
            "C_fit": self.C_fit,
            "max_ratio": self.max_ratio,
            "sample_size": self.sample_size,
            "grid": self.grid,
            "sample": self.sample,
        }


@dataclass(frozen=True)
class KernelSample:
    """Refinement-invariant sample: interior node fractions and time-level fractions."""

    x_fracs: tuple = tuple(k / 8 for k in range(1, 8))
    t_fracs: tuple = tuple(k / 8 for k in range(0, 9))

    def nodes(self, space: SpaceGrid) -> list:
        return sorted({min(max(int(round(f * space.nx)), 1), space.nx - 1) for f in self.x_fracs})

    def levels(self, time: TimeGrid) -> list:
        return sorted({int(round(f * time.nt)) for f in self.t_fracs})

    def describe(self) -> str:
        return f"x,y in {len(self.x_fracs)} interior fractions; times on {len(self.t_fracs)} levels"


class _Kernels:
    def __init__(self, table: GreenTable, pairs):
        by_src = {}
        for m, l in pairs:
            by_src.setdefault(l, set()).add(m)
        self._k = {}
        for l, ms in by_src.items():
            for m, K in table.kernels_from(l, ms).items():
                self._k[(m, l)] = K

    def __call__(self, m, l):
        return self._k[(m, l)]


def _deriv(K, i, j, order, axis, dx):
    """Centered difference of ``K`` at ``(i, j)`` along x (axis 0) or y (axis 1)."""
    def at(di):
        return K[i + di, j] if axis == 0 else K[i, j + di]

    if order == 0:
        return at(0)
    if order == 1:
        return (at(1) - at(-1)) / (2 * dx)
    return (at(1) - 2 * at(0) + at(-1)) / dx**2


def verify_kernel_estimate(
    table: GreenTable,
    estimate: str,
    *,
    mu: int = 0,
    nu: int = 0,
    delta: float = 0.6,
    decay: float | None = None,
    sample: KernelSample | None = None,
) -> KernelEstimateReport:
    """Fit the constant of one kernel estimate over a deterministic sample.

    Parameters
    ----------
    estimate : {"gaus", "dG1", "dG2", "deltaG1", "deltaG", "deltaG2"}
        ``dG1`` differentiates in ``(x, t)``, ``dG2`` in ``(y, s)``; both use
        centered differences and need ``mu + 2 nu <= 2``.
    delta : float
        Hoelder exponent for the ``delta*`` estimates; must exceed ``max(1/3, alpha)``
        in the solver's use, here only ``(1/3, 1)`` is enforced.
    decay : float, optional
        Gaussian decay constant of the envelope; defaults to ``1 / (8 k_max)``,
        half the rate of the free heat kernel with the largest diffusivity.
    sample : KernelSample, optional
        Node and time-level fractions; defaults to 7 x 7 interior nodes over 9
        equispaced levels.  Time offsets never fall below ``T / 8``; for
        second-order derivatives (``mu + 2 nu = 2``) pairs closer than
        ``10 dt`` are also dropped.

    Returns
    -------
    KernelEstimateReport
        ``C_fit`` is the smallest constant with every sampled ratio <= 1.
    """
    if estimate not in ESTIMATES:
        raise DomainError(f"unknown estimate {estimate!r}; known: {ESTIMATES}")
    if estimate == "gaus":
        mu, nu = 0, 0
    if estimate in ("dG1", "dG2", "gaus") and (mu < 0 or nu < 0 or mu + 2 * nu > 2):
        raise DomainError("derivative orders need mu + 2 nu <= 2")
    if estimate.startswith("delta") and not (1.0 / 3.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (1/3, 1), got {delta}")
    sample = sample or KernelSample()
    c = decay if decay is not None else 1.0 / (8.0 * table.k_upper)
    xs = table.space.x
    T = table.time.times
    dx, dt = table.space.dx, table.time.dt
    nodes = sample.nodes(table.space)
    lev = sample.levels(table.time)
    nt = table.time.nt

    tuples = []
    if estimate in ("gaus", "dG1", "dG2"):
        for a, l in enumerate(lev):
            for m in lev[a + 1 :]:
                if estimate == "dG1" and nu and (m + 1 > nt or m - 1 <= l):
                    continue
                if estimate == "dG2" and nu and (l - 1 < 0 or l + 1 >= m):
                    continue
                # second derivatives of an O(dx)-wide kernel: keep t - s >= 10 dt
                if mu + 2 * nu == 2 and m - l - nu < MIN_SECOND_ORDER_LAG:
                    continue
                tuples.append((m, l))
    elif estimate in ("deltaG1", "deltaG"):
        for a in range(len(lev)):
            for b in range(a + 1, len(lev)):
                for d in range(b + 1, len(lev)):
                    tuples.append((lev[a], lev[b], lev[d]))
    else:
        for a in range(len(lev)):
            for b in range(a + 1, len(lev)):
                for c3 in range(b + 1, len(lev)):
                    for d in range(c3 + 1, len(lev)):
                        tuples.append((lev[a], lev[b], lev[c3], lev[d]))
    if not tuples or not nodes:
        raise DomainError("empty sample")

    pairs = set()
    for tp in tuples:
        if estimate in ("gaus", "dG1", "dG2"):
            m, l = tp
            ms = [m - 1, m, m + 1] if (estimate == "dG1" and nu) else [m]
            ls = [l - 1, l, l + 1] if (estimate == "dG2" and nu) else [l]
            pairs.update((mm, ll) for mm in ms for ll in ls)
        elif estimate == "deltaG1":
            r, v, t = tp
            pairs.update({(t, v), (t, r)})
        elif estimate == "deltaG":
            v, s, t = tp
            pairs.update({(t, v), (s, v)})
        else:
            r, v, s, t = tp
            pairs.update({(t, v), (s, v), (t, r), (s, r)})
    G = _Kernels(table, pairs)

    ratios = []
    for tp in tuples:
        for i in nodes:
            for j in nodes:
                z = xs[i] - xs[j]
                if estimate in ("gaus", "dG1", "dG2"):
                    m, l = tp
                    tau = T[m] - T[l]
                    if estimate == "dG2":
                        if nu:
                            val = (_deriv(G(m, l + 1), i, j, mu, 1, dx) - _deriv(G(m, l - 1), i, j, mu, 1, dx)) / (2 * dt)
                        else:
                            val = _deriv(G(m, l), i, j, mu, 1, dx)
                    elif nu:
                        val = (_deriv(G(m + 1, l), i, j, mu, 0, dx) - _deriv(G(m - 1, l), i, j, mu, 0, dx)) / (2 * dt)
                    else:
                        val = _deriv(G(m, l), i, j, mu, 0, dx)
                    env = tau ** (-(mu + 2 * nu) / 2) * envelope_phi(tau, z, c)
                elif estimate == "deltaG1":
                    r, v, t = tp
                    val = G(t, v)[i, j] - G(t, r)[i, j]
                    env = (T[t] - T[v]) ** -delta * (T[v] - T[r]) ** delta * _sup_phi(T[t] - T[v], T[t] - T[r], z, c)
                elif estimate == "deltaG":
                    v, s, t = tp
                    val = G(t, v)[i, j] - G(s, v)[i, j]
                    env = (T[t] - T[s]) ** delta * (T[s] - T[v]) ** -delta * _sup_phi(T[s] - T[v], T[t] - T[v], z, c)
                else:
                    r, v, s, t = tp
                    val = G(t, v)[i, j] - G(s, v)[i, j] - G(t, r)[i, j] + G(s, r)[i, j]
                    env = _double_envelope(T[r], T[v], T[s], T[t], z, c)
                ratios.append(abs(val) / float(env))
    ratios = np.asarray(ratios)
    C_fit = float(ratios.max())
    max_ratio = float((ratios / C_fit).max()) if C_fit > 0 else 0.0
    params = {"mu": mu, "nu": nu, "delta": delta, "decay": c}
    grid = {"nx": table.space.nx, "nt": nt, "T": table.time.T, "substeps": table.substeps}
    return KernelEstimateReport(estimate, params, C_fit, max_ratio, ratios.size, grid, sample.describe(), ratios)
