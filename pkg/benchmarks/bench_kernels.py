"""Time the numba kernels against their numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 5]

Each kernel is run on inputs sized like the benchmark workload (10^4
posterior draws, 2,500 test rows, 100 categories).  The numba versions are
warmed up once so compilation is excluded.  Outputs of the two backends are
compared before timing.
"""

import argparse
import timeit

import numpy as np

from glmmnet import _kernels


def workloads(rng):
    draws = rng.normal(0.0, 0.2, 10_000)
    lo, hi = draws.min(), draws.max()
    centers = np.linspace(lo, hi, 400)
    weights = rng.dirichlet(np.ones(400))
    grid = np.linspace(lo - 3.0, hi + 3.0, 2_000)
    grads = rng.normal(size=(256, 4))
    codes = rng.integers(0, 101, 256)
    ranks = np.arange(1, 31) * 2
    return {
        "segment_sum (256x4 -> 101)": lambda k: k.segment_sum(grads, codes, 101),
        "linear_deposit (1e4 draws, 400 bins)": lambda k: k.linear_deposit(draws, lo, (hi - lo) / 399, 400),
        "gauss_mixture_cdf (2000 x 400)": lambda k: k.gauss_mixture_cdf(grid, centers, weights, 0.4),
        "signed_rank_null (n=30)": lambda k: k.signed_rank_null(ranks),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return 1
    backends = [_kernels.numpy_kernels, _kernels.numba_kernels]
    print(f"{'kernel':40s} {'numpy (ms)':>12s} {'numba (ms)':>12s} {'speed-up':>9s}")
    for name, fn in workloads(np.random.default_rng(args.seed)).items():
        ref, fast = fn(backends[0]), fn(backends[1])
        np.testing.assert_allclose(fast, ref, rtol=1e-10, atol=1e-12)
        times = []
        for k in backends:
            number = 20
            best = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeats)) / number
            times.append(best * 1e3)
        print(f"{name:40s} {times[0]:12.3f} {times[1]:12.3f} {times[0] / times[1]:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
