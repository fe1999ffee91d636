"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sizes 1000 100000]
"""

import argparse
import timeit

import numpy as np

from imbalance_lab._kernels import _pykernels

try:
    from imbalance_lab._kernels import _ckernels
except ImportError:
    _ckernels = None


def ce_inputs(n, C, rng):
    return rng.standard_normal((n, C)) * 3, rng.integers(0, C, n), rng.standard_normal((C, C))


def ldi_inputs(n, rng, degree=10):
    return n, rng.integers(0, n, (n * degree // 2, 2)), rng.integers(0, 4, n)


def best_of(fn, args, repeat):
    number = 3
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    ap.add_argument("--classes", type=int, default=10)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels are not built; only the numpy timings are shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'n':>10}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}")
    for n in args.sizes:
        for name, inputs in (("perturbed_ce_batch", ce_inputs(n, args.classes, rng)),
                             ("ldi_counts", ldi_inputs(n, rng))):
            t_py = best_of(getattr(_pykernels, name), inputs, args.repeat)
            if _ckernels is None:
                print(f"{name:<20}{n:>10}{t_py * 1e3:>12.3f}{'-':>12}{'-':>10}")
                continue
            t_c = best_of(getattr(_ckernels, name), inputs, args.repeat)
            print(f"{name:<20}{n:>10}{t_py * 1e3:>12.3f}{t_c * 1e3:>12.3f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
