"""Hot inner loops.

Every kernel exists twice: a pure-numpy version and a numba ``@njit``
version with identical semantics.  The numba versions are used when numba
imports and ``FSHEAT_DISABLE_NUMBA`` is unset (or ``0``); setting
``FSHEAT_DISABLE_NUMBA=1`` selects the numpy versions for the whole process.
Both sets are always importable through :data:`IMPLEMENTATIONS` so tests and
benchmarks can compare them directly.

Singular quadrature convention (shared by all kernels): the grid cell that
touches the singular point is dropped and every other cell contributes its
left-endpoint value times ``dt``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("FSHEAT_DISABLE_NUMBA", "0").strip().lower() not in (
    "1",
    "true",
    "yes",
    "on",
)


# --------------------------------------------------------------------------- #
# numpy implementations
# --------------------------------------------------------------------------- #
def _seminorm_np(f, alpha, dt, n_end):
    best = 0.0
    lag_all = np.arange(1, n_end + 1) * dt
    first_pow = lag_all ** (1.0 - alpha)
    inner_pow = lag_all ** (alpha - 2.0)
    for i in range(n_end):
        d = np.abs(f[i + 1 : n_end + 1] - f[i])
        m = d.size
        first = d / first_pow[:m]
        terms = d * inner_pow[:m] * dt
        inner = np.empty(m)
        inner[0] = 0.0
        if m > 1:
            inner[1:] = np.cumsum(terms[:-1])
        cand = np.max(first + inner)
        if cand > best:
            best = cand
    return best


def _lag_weights(nt1, alpha, dt):
    # w[lag] = (lag dt)^(-alpha-1) dt; lag 0 is never used
    w = np.zeros(nt1)
    if dt > 0:
        w[1:] = (np.arange(1, nt1) * dt) ** (-alpha - 1.0) * dt
    return w


def _alpha1_profile_np(values, alpha, dt):
    nt1 = values.shape[0]
    prof = np.zeros(nt1)
    if nt1 < 3:
        return prof
    w = _lag_weights(nt1, alpha, dt)
    for n in range(2, nt1):
        lags = n - np.arange(n - 1)
        diffs = np.abs(values[n][None, :] - values[: n - 1])
        prof[n] = np.max(w[lags] @ diffs)
    return prof


def _alpha2_inner_np(values, weights, alpha, dt):
    nt1 = values.shape[0]
    inner = np.zeros(nt1)
    if nt1 < 3:
        return inner
    w = _lag_weights(nt1, alpha, dt)
    for n in range(2, nt1):
        lags = n - np.arange(n - 1)
        diffs = values[n][None, :] - values[: n - 1]
        l2 = np.sqrt((diffs * diffs) @ weights)
        inner[n] = w[lags] @ l2
    return inner


def _envelope_np(psi, alpha, dt, a, b):
    total = 0.0
    for k in range(a + 1, b):
        s = psi[k]
        acc = abs(s) * ((k - a) * dt) ** (-alpha)
        if k - 2 >= a:
            ls = np.arange(a, k - 1)
            acc += np.sum(np.abs(s - psi[ls]) * ((k - ls) * dt) ** (-alpha - 1.0)) * dt
        total += acc * dt
    return total


def _volterra_sweep_np(steps, start, left, right):
    nt = steps.shape[0]
    out = np.empty((nt + 1, start.shape[0]))
    out[0] = start
    for m in range(1, nt + 1):
        out[m] = steps[m - 1] @ (out[m - 1] + left[m - 1]) + right[m]
    return out


# --------------------------------------------------------------------------- #
# numba implementations
# --------------------------------------------------------------------------- #
def _seminorm_py(f, alpha, dt, n_end):
    best = 0.0
    for i in range(n_end):
        fi = f[i]
        inner = 0.0
        for j in range(i + 1, n_end + 1):
            k = j - 1
            if k > i:
                inner += abs(f[k] - fi) * ((k - i) * dt) ** (alpha - 2.0) * dt
            cand = abs(f[j] - fi) / ((j - i) * dt) ** (1.0 - alpha) + inner
            if cand > best:
                best = cand
    return best


def _alpha1_profile_py(values, alpha, dt):
    nt1, nx1 = values.shape
    prof = np.zeros(nt1)
    if nt1 < 3 or dt <= 0.0:
        return prof
    w = np.zeros(nt1)
    for k in range(1, nt1):
        w[k] = (k * dt) ** (-alpha - 1.0) * dt
    for n in range(2, nt1):
        best = 0.0
        for i in range(nx1):
            s = 0.0
            un = values[n, i]
            for l in range(n - 1):
                s += abs(un - values[l, i]) * w[n - l]
            if s > best:
                best = s
        prof[n] = best
    return prof


def _alpha2_inner_py(values, weights, alpha, dt):
    nt1, nx1 = values.shape
    inner = np.zeros(nt1)
    if nt1 < 3 or dt <= 0.0:
        return inner
    w = np.zeros(nt1)
    for k in range(1, nt1):
        w[k] = (k * dt) ** (-alpha - 1.0) * dt
    for n in range(2, nt1):
        s = 0.0
        for l in range(n - 1):
            q = 0.0
            for i in range(nx1):
                d = values[n, i] - values[l, i]
                q += weights[i] * d * d
            s += np.sqrt(q) * w[n - l]
        inner[n] = s
    return inner


def _envelope_py(psi, alpha, dt, a, b):
    total = 0.0
    for k in range(a + 1, b):
        s = psi[k]
        acc = abs(s) * ((k - a) * dt) ** (-alpha)
        for l in range(a, k - 1):
            acc += abs(s - psi[l]) * ((k - l) * dt) ** (-alpha - 1.0) * dt
        total += acc * dt
    return total


def _volterra_sweep_py(steps, start, left, right):
    nt, n, _ = steps.shape
    out = np.empty((nt + 1, n))
    for i in range(n):
        out[0, i] = start[i]
    buf = np.empty(n)
    for m in range(1, nt + 1):
        for i in range(n):
            buf[i] = out[m - 1, i] + left[m - 1, i]
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += steps[m - 1, i, j] * buf[j]
            out[m, i] = s + right[m, i]
    return out


_NAMES = ("seminorm", "alpha1_profile", "alpha2_inner", "envelope", "volterra_sweep")

IMPLEMENTATIONS = {
    "numpy": {
        "seminorm": _seminorm_np,
        "alpha1_profile": _alpha1_profile_np,
        "alpha2_inner": _alpha2_inner_np,
        "envelope": _envelope_np,
        "volterra_sweep": _volterra_sweep_np,
    }
}

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    IMPLEMENTATIONS["numba"] = {
        "seminorm": _jit(_seminorm_py),
        "alpha1_profile": _jit(_alpha1_profile_py),
        "alpha2_inner": _jit(_alpha2_inner_py),
        "envelope": _jit(_envelope_py),
        "volterra_sweep": _jit(_volterra_sweep_py),
    }

BACKEND = "numba" if USE_NUMBA else "numpy"
_active = IMPLEMENTATIONS[BACKEND]


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def seminorm(f, alpha: float, dt: float, n_end: int) -> float:
    """Discrete ``sup_{0<=i<j<=n_end}`` of the alpha-0 seminorm functional."""
    return float(_active["seminorm"](_f64(f), float(alpha), float(dt), int(n_end)))


def alpha1_profile(values, alpha: float, dt: float) -> np.ndarray:
    """Per-time ``max_x`` of the singular increment integral, shape ``(nt+1,)``."""
    return _active["alpha1_profile"](_f64(values), float(alpha), float(dt))


def alpha2_inner(values, weights, alpha: float, dt: float) -> np.ndarray:
    """Per-time singular integral of L2-in-space increments, shape ``(nt+1,)``."""
    return _active["alpha2_inner"](_f64(values), _f64(weights), float(alpha), float(dt))


def envelope(psi, alpha: float, dt: float, a: int, b: int) -> float:
    """Fractional envelope of a scalar integrand over grid window ``[a, b]``."""
    return float(_active["envelope"](_f64(psi), float(alpha), float(dt), int(a), int(b)))


def volterra_sweep(steps, start, left, right) -> np.ndarray:
    """``out[m] = steps[m-1] @ (out[m-1] + left[m-1]) + right[m]``, ``out[0] = start``."""
    return _active["volterra_sweep"](_f64(steps), _f64(start), _f64(left), _f64(right))
