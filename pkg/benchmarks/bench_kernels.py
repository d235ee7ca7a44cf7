"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--zones N] [--repeats R]

Both backends compute bit-identical results; this script reports how
much wall time the compiled extension saves on representative problem
sizes (the per-cell kernels dominate fit/evaluate pipelines).
"""

import argparse
import time

import numpy as np

from odflow import _kernels_py as fallback

try:
    from odflow import _kernels as compiled
except ImportError:
    compiled = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--zones", type=int, default=150)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(42)
    n = args.zones
    lat = rng.uniform(35.0, 60.0, n)
    lon = rng.uniform(-10.0, 25.0, n)
    pop = np.exp(rng.uniform(np.log(1e5), np.log(5e7), n))
    si = rng.uniform(0.0, 100.0, n)

    dist = fallback.distance_matrix(lat, lon)
    rate = 1.0 / dist[dist > 0].mean()
    mean_flows = fallback.cgm_matrix(pop, dist, si, -18.0, 0.9, 0.8, 1.3,
                                     -0.02, -0.03, True, rate)
    outflow = 0.01 * pop
    opportunity = fallback.opportunity_matrix(dist, pop)

    cases = [
        ("distance_matrix", lambda k: k.distance_matrix(lat, lon)),
        ("opportunity_matrix", lambda k: k.opportunity_matrix(dist, pop)),
        ("gravity_matrix", lambda k: k.gravity_matrix(pop, dist, 1e-9, 0.002, True)),
        ("cgm_matrix", lambda k: k.cgm_matrix(pop, dist, si, -18.0, 0.9, 0.8,
                                              1.3, -0.02, -0.03, True, rate)),
        ("radiation_matrix", lambda k: k.radiation_matrix(pop, opportunity,
                                                          outflow, False)),
        ("poisson_matrix", lambda k: k.poisson_matrix(mean_flows, 7, 737000)),
        ("negative_binomial_matrix",
         lambda k: k.negative_binomial_matrix(mean_flows, 1.0, 7, 737000)),
    ]

    print(f"zones={n}, repeats={args.repeats} (best time shown)")
    header = f"{'kernel':<26} {'python':>12} {'compiled':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        py_time, py_result = timeit(lambda: call(fallback), args.repeats)
        if compiled is None:
            print(f"{name:<26} {py_time * 1e3:>10.2f}ms {'n/a':>12} {'n/a':>9}")
            continue
        c_time, c_result = timeit(lambda: call(compiled), args.repeats)
        identical = np.array_equal(np.asarray(py_result), np.asarray(c_result))
        marker = "" if identical else "  (RESULTS DIFFER!)"
        print(f"{name:<26} {py_time * 1e3:>10.2f}ms {c_time * 1e3:>10.2f}ms "
              f"{py_time / c_time:>8.1f}x{marker}")
    if compiled is None:
        print("\ncompiled backend not built; install with: pip install -e . --no-build-isolation")


if __name__ == "__main__":
    main()
