"""Compare the compiled and pure-numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--sizes 100,1000,10000] [--reps 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dynrmst._kernels import _py

try:
    from dynrmst._kernels import _speedups
except ImportError:
    _speedups = None


def _dataset(rng, n):
    t = np.maximum(rng.exponential(5.0, n), 1e-3) + 1.0
    d = rng.integers(0, 2, n).astype(np.int64)
    p = rng.normal(size=n)
    return t, d, p


def _time(fn, reps):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="100,1000,10000")
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'n':>8}{'python':>12}{'cython':>12}{'speedup':>9}")
    for n in sizes:
        t, d, p = _dataset(rng, n)
        py = _time(lambda: _py.jackknife_pseudo(t, d, 0.5, 8.0), args.reps)
        if _speedups is not None:
            cy = _time(lambda: _speedups.jackknife_pseudo(t, d, 0.5, 8.0), args.reps)
            a = _py.jackknife_pseudo(t, d, 0.5, 8.0)
            b = _speedups.jackknife_pseudo(t, d, 0.5, 8.0)
            assert np.array_equal(a, b), "backends disagree"
            print(f"{'jackknife_pseudo':<18}{n:>8}{py*1e3:>10.3f}ms"
                  f"{cy*1e3:>10.3f}ms{py/cy:>8.1f}x")
        else:
            print(f"{'jackknife_pseudo':<18}{n:>8}{py*1e3:>10.3f}ms"
                  f"{'n/a':>12}{'':>9}")
    for n in sizes:
        if n > 5000:
            continue  # O(n^2) pair counting
        t, d, p = _dataset(rng, n)
        py = _time(lambda: _py.concordance_stats(t, d, p), args.reps)
        if _speedups is not None:
            cy = _time(lambda: _speedups.concordance_stats(t, d, p), args.reps)
            assert _py.concordance_stats(t, d, p) == _speedups.concordance_stats(t, d, p)
            print(f"{'concordance_stats':<18}{n:>8}{py*1e3:>10.3f}ms"
                  f"{cy*1e3:>10.3f}ms{py/cy:>8.1f}x")
        else:
            print(f"{'concordance_stats':<18}{n:>8}{py*1e3:>10.3f}ms"
                  f"{'n/a':>12}{'':>9}")


if __name__ == "__main__":
    main()
