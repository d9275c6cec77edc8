"""Benchmark: compiled phase-correlation kernel vs the NumPy fallback.

Times the hot per-realization contraction on workloads shaped like real
runs (N = n + 1 levels, G grid points) and prints a comparison table.

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from bfl import kernels


def workload(n_dim, n_points, seed=0):
    rng = np.random.default_rng(seed)
    b = (rng.standard_normal((n_dim, n_dim)) + 1j * rng.standard_normal((n_dim, n_dim))) / n_dim
    e_ref = rng.standard_normal(n_dim) * 0.01
    e_pert = e_ref + 1e-6 * rng.standard_normal(n_dim)
    times = np.linspace(0.0, 5e5, n_points)
    return b, e_ref, e_pert, times


def best_of(fn, repeats):
    out = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        out = min(out, time.perf_counter() - start)
    return out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    cases = [(65, 12289), (129, 12289), (257, 12289), (129, 98305)]
    print(f"compiled kernel available: {kernels.HAVE_COMPILED}")
    print(f"{'N':>5} {'grid':>7} {'numpy [ms]':>12} {'compiled [ms]':>14} {'speedup':>8}")
    for n_dim, n_points in cases:
        b, e_ref, e_pert, times = workload(n_dim, n_points)
        t_numpy = best_of(
            lambda: kernels.phase_correlation_trace_numpy(b, e_ref, e_pert, times), args.repeats
        )
        if kernels.HAVE_COMPILED:
            t_comp = best_of(
                lambda: kernels._compiled.phase_correlation_trace(b, e_ref, e_pert, times),
                args.repeats,
            )
            ref = kernels.phase_correlation_trace_numpy(b, e_ref, e_pert, times)
            got = kernels._compiled.phase_correlation_trace(b, e_ref, e_pert, times)
            err = np.abs(got - ref).max()
            print(
                f"{n_dim:>5} {n_points:>7} {1e3 * t_numpy:>12.1f} {1e3 * t_comp:>14.1f} "
                f"{t_numpy / t_comp:>7.1f}x   (max |diff| {err:.1e})"
            )
        else:
            print(f"{n_dim:>5} {n_points:>7} {1e3 * t_numpy:>12.1f} {'-':>14} {'-':>8}")


if __name__ == "__main__":
    main()
