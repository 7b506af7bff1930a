"""Time the numpy and numba kernels side by side.

    python3 benchmarks/bench_kernels.py [--quick] [--repeat N]

Sizes follow the default solve (nx=64, nt=256).  Numba is warmed up before
timing, so compile time is excluded; outputs are checked for agreement.
"""

import argparse
import time

import numpy as np

from fsheat import kernels
from fsheat.green import build_propagator
from fsheat.grids import SpaceGrid, TimeGrid
from fsheat.presets import Coefficient


def cases(nx, nt):
    rng = np.random.default_rng(0)
    path = np.cumsum(rng.standard_normal(nt + 1)) / np.sqrt(nt)
    field = np.cumsum(rng.standard_normal((nt + 1, nx + 1)), axis=0) / np.sqrt(nt)
    w = SpaceGrid(nx).weights
    dt = 0.5 / nt
    steps = np.ascontiguousarray(build_propagator(Coefficient("variable"), SpaceGrid(nx), TimeGrid(0.5, nt)).steps)
    left, right = 1e-3 * field[:-1], 1e-3 * field
    return {
        "seminorm": (path, 0.35, dt, nt),
        "alpha1_profile": (field, 0.35, dt),
        "alpha2_inner": (field, w, 0.35, dt),
        "envelope": (path, 0.35, dt, 0, nt),
        "volterra_sweep": (steps, field[0].copy(), left, right),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small sizes (nx=16, nt=64)")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    nx, nt = (16, 64) if args.quick else (64, 256)
    impl_np = kernels.IMPLEMENTATIONS["numpy"]
    impl_nb = kernels.IMPLEMENTATIONS.get("numba")
    print(f"nx={nx} nt={nt} repeat={args.repeat} numba={'yes' if impl_nb else 'no'}")
    print(f"{'kernel':16s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>9s}  max |diff|")
    for name, a in cases(nx, nt).items():
        t_np, out_np = best_of(impl_np[name], a, args.repeat)
        if impl_nb is None:
            print(f"{name:16s} {1e3 * t_np:12.3f} {'-':>12s}")
            continue
        impl_nb[name](*a)  # compile
        t_nb, out_nb = best_of(impl_nb[name], a, args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_np) - np.asarray(out_nb))))
        print(f"{name:16s} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:9.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
