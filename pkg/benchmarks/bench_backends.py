#!/usr/bin/env python3
"""Time the compiled ROCKET kernel against the numpy fallback.

    python3 benchmarks/bench_backends.py --n 20 --kernels 2000
"""

import argparse
import time

import numpy as np

from mtsxplain import rocket
from mtsxplain.rocket import _backend


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=20, help="series per batch")
    ap.add_argument("--channels", type=int, default=20)
    ap.add_argument("--length", type=int, default=100)
    ap.add_argument("--kernels", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.standard_normal((args.n, args.channels, args.length))
    t = rocket.sample_kernels(args.kernels, args.channels, args.length, seed=0)
    print(f"shape {X.shape}, {args.kernels} kernels, active backend: {_backend.BACKEND}")

    py_time, py_out = best_of(
        lambda: rocket.transform_array(t, X, backend=_backend.python_apply_kernels), args.repeats)
    print(f"python  {py_time * 1e3:9.1f} ms  ({py_time / args.n * 1e3:.2f} ms/series)")
    if _backend.compiled_apply_kernels is None:
        print("cython  not built")
        return
    cy_time, cy_out = best_of(
        lambda: rocket.transform_array(t, X, args.threads, _backend.compiled_apply_kernels),
        args.repeats)
    print(f"cython  {cy_time * 1e3:9.1f} ms  ({cy_time / args.n * 1e3:.2f} ms/series)")
    print(f"speedup {py_time / cy_time:.1f}x, max |diff| {np.abs(py_out - cy_out).max():.3g}")


if __name__ == "__main__":
    main()
