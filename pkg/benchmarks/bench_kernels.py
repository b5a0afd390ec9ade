"""Time the compiled kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 2000,20000,200000]

Prints one row per (kernel, n): best-of-repeat seconds for each backend,
the speedup and the largest difference relative to the peak value.
"""

import argparse
import time

import numpy as np

from nddsize import _kernels_py, kde

try:
    from nddsize import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def univariate_case(n, rng):
    x = np.sort(rng.standard_t(4, n))
    grid = kde.build_grid(x).axes[0]
    h = kde.silverman_bandwidth(x)
    return lambda mod: mod.gauss_sum_sorted(x, grid, h, kde.KERNEL_CUTOFF)


def joint_case(n, rng):
    x = rng.normal(size=(n, 4)) * [1.0, 2.0, 0.5, 3.0]
    g = kde.build_grid(x)
    args = (x, np.concatenate(g.axes), np.asarray(g.shape, dtype=np.intp),
            kde.silverman_bandwidth(x), kde.KERNEL_CUTOFF)
    return lambda mod: mod.gauss_product_scatter(*args)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="2000,20000,200000")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; run pip install -e . first")

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<10}{'n':>9}{'cython s':>12}{'numpy s':>12}{'speedup':>9}{'max rel diff':>14}")
    for name, make in (("1-D", univariate_case), ("4-D joint", joint_case)):
        for n in sizes:
            case = make(n, rng)
            tc, a = best_of(lambda: case(_kernels), args.repeat)
            tp, b = best_of(lambda: case(_kernels_py), args.repeat)
            diff = float(np.max(np.abs(np.asarray(a) - b)) / np.max(b))
            print(f"{name:<10}{n:>9}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}{diff:>14.1e}")


if __name__ == "__main__":
    main()
