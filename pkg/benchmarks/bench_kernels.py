"""Timings of the hot kernels, numba against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--reps 256] [--m 4096]
"""
import argparse
import time

import numpy as np

from donsker_lab import kernels
from donsker_lab._accel import HAVE_NUMBA
from donsker_lab.sobolev import _gauss, _composite, lag_nodes


def best_of(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=256)
    ap.add_argument("--m", type=int, default=4096)
    ap.add_argument("--p", type=float, default=20.0)
    ap.add_argument("--eta", type=float, default=0.1)
    args = ap.parse_args()

    gen = np.random.default_rng(0)
    m, p, eta = args.m, args.p, args.eta
    X = 2.0 * gen.integers(0, 2, (args.reps, m)) - 1.0
    V = np.zeros((args.reps, m + 1))
    V[:, 1:] = np.cumsum(X, axis=1) / np.sqrt(m)
    rn, rw = lag_nodes(m, eta, p)
    pint = kernels.as_pint(p)
    small = V[:4, :: max(1, m // 128)].copy()
    gx, gw = _gauss(10)
    wx, ww = _composite(10, 1)

    cases = {
        "lag_seminorm_power": (
            lambda: kernels.lag_seminorm_power_numpy(V, rn, rw, p, pint),
            lambda: kernels.lag_seminorm_power_numba(V, rn, rw, p, pint),
        ),
        "lp_power": (
            lambda: kernels.lp_power_numpy(V, p, pint),
            lambda: kernels.lp_power_numba(V, p, pint),
        ),
        "cellpair (m=128, 4 paths)": (
            lambda: [kernels.cellpair_seminorm_power_numpy(v, eta, p, gx, gw, wx, ww) for v in small],
            lambda: [kernels.cellpair_seminorm_power_numba(v, eta, p, gx, gw, wx, ww) for v in small],
        ),
        "walk_min_and_end": (
            lambda: kernels.walk_min_and_end_numpy(X),
            lambda: kernels.walk_min_and_end_numba(X),
        ),
    }
    print(f"reps={args.reps} m={m} p={p:g} eta={eta:g} lag nodes={len(rn)}")
    print(f"{'kernel':28s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb) in cases.items():
        t_np = best_of(f_np)
        if HAVE_NUMBA:
            f_nb()  # compile
            t_nb = best_of(f_nb)
            print(f"{name:28s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}")
        else:
            print(f"{name:28s} {t_np:10.4f} {'-':>10s}")


if __name__ == "__main__":
    main()
