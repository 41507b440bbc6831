"""Timing comparison of the two hot kernels under both backends.

Runs each kernel with the pure-numpy implementation and, when numba is
installed, with the JIT-compiled implementation (after a warm-up call so
compilation time is excluded). Usage:

    python3 benchmarks/bench_kernels.py [--sequences 20000] [--customers 100]
                                        [--rows 20000] [--dim 16] [--heads 8]
                                        [--repeats 5]
"""

import argparse
import time

import numpy as np

from mppca import _kernels


def best_of(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sequences", type=int, default=20_000)
    parser.add_argument("--customers", type=int, default=100)
    parser.add_argument("--rows", type=int, default=20_000)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--heads", type=int, default=8)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    uniforms = rng.random((args.sequences, args.customers))
    x = rng.standard_normal((args.rows, args.dim))
    mus = rng.standard_normal((args.heads, args.dim))
    ws = rng.standard_normal((args.heads, args.dim))
    sigma2s = rng.random(args.heads) + 0.2

    cases = {
        f"simulate_crp_counts ({args.sequences}x{args.customers})": (
            _kernels.numpy_simulate_crp_counts,
            (uniforms, 1.0),
        ),
        f"rank1_log_density ({args.rows}x{args.dim}, {args.heads} heads)": (
            _kernels.numpy_rank1_log_density,
            (x, mus, ws, sigma2s),
        ),
    }

    try:
        numba_crp, numba_rank1 = _kernels._build_numba_kernels()
        numba_fns = [numba_crp, numba_rank1]
        for fn, (_, call_args) in zip(numba_fns, cases.values()):
            fn(*call_args)  # warm-up: trigger JIT compilation
    except ImportError:
        numba_fns = None
        print("numba not installed; timing the numpy backend only\n")

    width = max(len(name) for name in cases)
    header = f"{'kernel':<{width}}  {'numpy':>10}"
    if numba_fns:
        header += f"  {'numba':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for i, (name, (numpy_fn, call_args)) in enumerate(cases.items()):
        t_numpy = best_of(numpy_fn, call_args, args.repeats)
        line = f"{name:<{width}}  {t_numpy * 1e3:>8.2f}ms"
        if numba_fns:
            t_numba = best_of(numba_fns[i], call_args, args.repeats)
            line += f"  {t_numba * 1e3:>8.2f}ms  {t_numpy / t_numba:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
