"""Compare the numpy and numba kernel backends on representative loads.

Usage: python benchmarks/bench_kernels.py [--repeats 5]

The shapes mirror the hot paths: many small matrices (the d=2 Monte Carlo
cells) and moderate batches of d=6 matrices (the rank-K scenarios). The
numba timings exclude the first call (JIT compilation).
"""

import argparse
import time

import numpy as np

from gwreg._kernels import get_impl


def make_batch(rng, n, d):
    a = rng.standard_normal((n, d, d))
    covs1 = a @ np.swapaxes(a, -1, -2) + 0.3 * np.eye(d)
    b = rng.standard_normal((n, d, d))
    covs2 = b @ np.swapaxes(b, -1, -2) + 0.3 * np.eye(d)
    means1 = rng.standard_normal((n, d))
    means2 = rng.standard_normal((n, d))
    q = rng.standard_normal((d, d))
    ref = q @ q.T + 0.5 * np.eye(d)
    w, v = np.linalg.eigh(ref)
    sqrt_ref = (v * np.sqrt(w)) @ v.T
    invsqrt_ref = (v / np.sqrt(w)) @ v.T
    return means1, covs1, means2, covs2, sqrt_ref, invsqrt_ref


def time_call(fn, *args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = {"numpy": get_impl("numpy")}
    try:
        backends["numba"] = get_impl("numba")
    except ImportError:
        print("numba not installed; benchmarking numpy only")

    rng = np.random.default_rng(0)
    cases = [("n=20000, d=2", 20_000, 2), ("n=5000, d=6", 5_000, 6)]
    kernels = ["sqrt_psd_batch", "transport_batch", "wasserstein_batch"]

    print(f"{'case':<16} {'kernel':<20} " + " ".join(f"{b:>10}" for b in backends))
    for label, n, d in cases:
        m1, c1, m2, c2, sref, isref = make_batch(rng, n, d)
        arg_map = {
            "sqrt_psd_batch": (c1,),
            "transport_batch": (sref, isref, c1),
            "wasserstein_batch": (m1, c1, m2, c2),
        }
        for kernel in kernels:
            row = f"{label:<16} {kernel:<20} "
            outs = {}
            for name, impl in backends.items():
                fn = getattr(impl, kernel)
                fn(*arg_map[kernel])  # warm up / compile
                outs[name] = time_call(fn, *arg_map[kernel], repeats=args.repeats)
                row += f"{outs[name] * 1e3:>9.1f}ms"
            if len(outs) == 2:
                row += f"   (numba {outs['numpy'] / outs['numba']:.2f}x)"
            print(row)


if __name__ == "__main__":
    main()
