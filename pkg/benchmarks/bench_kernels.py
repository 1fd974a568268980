#!/usr/bin/env python3
"""Benchmark the compiled stepping core against the pure fallback.

Runs the hot kernels on representative workloads under both backends and
prints a table with the speedup.  Usage:

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import os
import time


def _timed(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(quick):
    from ergodiff import ergodicity, poisson, sde
    from ergodiff.models import benchmark_fast_slow, f_coord, ou_model
    from ergodiff import averaging

    model, _ = ou_model()
    scale = 0.2 if quick else 1.0

    def long_trajectory():
        ergodicity.estimate_invariant_measure(
            model, burn_in=5.0, n_samples=int(200_000 * scale),
            thinning_time=0.05, seed=1)

    def wide_ensemble():
        cfg = sde.IntegratorConfig(dt=0.01, horizon=2.0, seed=2,
                                   n_paths=int(20_000 * scale), thinning=200)
        sde.simulate_ensemble(model, [0.0], cfg)

    mu = ergodicity.estimate_invariant_measure(
        model, burn_in=5.0, n_samples=20_000, thinning_time=0.05, seed=3)
    fc = poisson.center_function(f_coord(), mu)

    def poisson_solve():
        poisson.solve_poisson_mc(model, fc, [[-1.0], [0.0], [1.0]],
                                 horizon_N=10.0,
                                 n_paths=int(4000 * scale), dt=1e-3, seed=4)

    va, _, _, _ = benchmark_fast_slow()

    def fast_slow():
        averaging.simulate_fast_slow(va, [0.0], [0.0], eps=0.1, T=1.0,
                                     fast_dt=0.02,
                                     n_paths=int(4000 * scale), seed=5)

    return [
        ("long trajectory (single path, thinned)", long_trajectory),
        ("wide ensemble (thinned records)", wide_ensemble),
        ("generator-equation solve (path integrals)", poisson_solve),
        ("coupled fast-slow ensemble", fast_slow),
    ]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true",
                        help="smaller budgets (sub-second rows)")
    args = parser.parse_args()

    import ergodiff.kernels as kernels
    if not kernels.have_native():
        print("compiled extension not available; nothing to compare")
        return

    results = {}
    for mode in ("native", "pure"):
        os.environ["ERGODIFF_BACKEND"] = mode
        for name, fn in workloads(args.quick):
            results.setdefault(name, {})[mode] = _timed(
                fn, repeat=2 if args.quick else 3)
    os.environ.pop("ERGODIFF_BACKEND", None)

    width = max(len(n) for n in results) + 2
    print(f"{'workload':<{width}} {'native':>9} {'pure':>9} {'speedup':>8}")
    for name, row in results.items():
        sp = row["pure"] / row["native"]
        print(f"{name:<{width}} {row['native']:>8.3f}s {row['pure']:>8.3f}s "
              f"{sp:>7.1f}x")


if __name__ == "__main__":
    main()
