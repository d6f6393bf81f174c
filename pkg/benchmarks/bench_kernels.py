#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--repeats N]

Covers the two hot paths: Sobel gradient magnitude (per-frame sharpness)
and merge-sort inversion counting (Kendall tau-b). The numba variants are
warmed up first so JIT compilation is not measured.
"""

import argparse
import time

import numpy as np

from vqstudy.kernels import np_impl

try:
    from vqstudy.kernels import nb_impl
except ImportError:
    nb_impl = None


def timeit(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def bench(name, np_fn, nb_fn, args, repeats):
    t_np, r_np = timeit(np_fn, *args, repeats=repeats)
    row = f"{name:<38} numpy {t_np*1e3:9.2f} ms"
    if nb_fn is not None:
        nb_fn(*args)  # warm the JIT
        t_nb, r_nb = timeit(nb_fn, *args, repeats=repeats)
        assert np.isclose(float(r_np), float(r_nb), atol=1e-9), (r_np, r_nb)
        row += f"   numba {t_nb*1e3:9.2f} ms   speedup {t_np/t_nb:6.1f}x"
    else:
        row += "   numba       (unavailable)"
    print(row)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<38} {'':>5}")

    frame_hd = rng.uniform(0, 1, (1080, 1920))
    frame_sd = rng.uniform(0, 1, (512, 512))
    series_big = np.round(rng.uniform(0, 10, 200_000) * 10) / 10
    series_small = np.round(rng.uniform(0, 10, 5_000) * 10) / 10

    nb = nb_impl if nb_impl is not None else None
    bench(
        "sobel_mean_grad_mag 1080x1920",
        np_impl.sobel_mean_grad_mag,
        nb.sobel_mean_grad_mag if nb else None,
        (frame_hd,),
        args.repeats,
    )
    bench(
        "sobel_mean_grad_mag 512x512",
        np_impl.sobel_mean_grad_mag,
        nb.sobel_mean_grad_mag if nb else None,
        (frame_sd,),
        args.repeats,
    )
    bench(
        "count_inversions n=200,000 (ties)",
        np_impl.count_inversions,
        nb.count_inversions if nb else None,
        (series_big,),
        args.repeats,
    )
    bench(
        "count_inversions n=5,000 (ties)",
        np_impl.count_inversions,
        nb.count_inversions if nb else None,
        (series_small,),
        args.repeats,
    )


if __name__ == "__main__":
    main()
