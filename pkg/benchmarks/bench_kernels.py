#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback.

Runs the two hot kernels on workloads shaped like their real call sites
(two-mode thermal flopping curves inside a fit; the entangling-gate
right-hand side inside the RK integrator) for the active backend, then
re-invokes itself in a fresh process with the other backend selected and
prints the side-by-side table.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _random_rho(n_levels, rng):
    dim = 4 * n_levels
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = m + m.conj().T
    return m / np.trace(m).real


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_suite(repeats):
    from trapsim.backend import backend_name, kernels

    rng = np.random.default_rng(7)
    cases = {}

    # two thermal modes near nbar = 15 prune to roughly 180 x 170 joint
    # terms; 60 time points is one model evaluation inside fit_nbar
    for n_terms, n_times in ((30_000, 60), (4_096, 400)):
        omega = rng.uniform(1e5, 4e6, n_terms)
        weight = rng.uniform(0.0, 1.0, n_terms)
        weight /= weight.sum()
        times = np.linspace(0.0, 12e-6, n_times)
        cases[f"weighted_sinsq_curve {n_terms}x{n_times}"] = _best_of(
            lambda: kernels.weighted_sinsq_curve(omega, weight, times),
            repeats)

    # gate RHS at the shipped reference size (n_max 27 -> 28 levels) and a
    # roomier Fock space; one propagation calls this thousands of times
    for n_levels, rate in ((28, 0.0), (28, 62.0), (41, 0.0)):
        rho = _random_rho(n_levels, rng)
        cases[f"ms_rhs {n_levels} levels, rate {rate:g}"] = _best_of(
            lambda: kernels.ms_rhs(rho, n_levels, 2.0e4, 2.2e4,
                                   0.36, 0.93, rate),
            repeats)
    return {"backend": backend_name(), "cases": cases}


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="compare kernel backends on representative workloads")
    ap.add_argument("--repeats", type=int, default=7,
                    help="timing repeats per case; best is reported")
    ap.add_argument("--json", action="store_true",
                    help="print raw timings for this process's backend only")
    args = ap.parse_args(argv)

    mine = run_suite(args.repeats)
    if args.json:
        print(json.dumps(mine))
        return 0

    env = dict(os.environ)
    if mine["backend"] == "compiled":
        env["TRAPSIM_PURE_PYTHON"] = "1"
    else:
        env.pop("TRAPSIM_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, __file__, "--json",
                          "--repeats", str(args.repeats)],
                         env=env, capture_output=True, text=True, check=True)
    other = json.loads(out.stdout)
    if mine["backend"] == other["backend"]:
        print("note: the compiled extension is unavailable, both columns "
              "ran the python fallback")

    width = max(len(k) for k in mine["cases"])
    print(f"{'case':<{width}}  {mine['backend']:>11}  {other['backend']:>11}"
          "    ratio")
    for case, dt in mine["cases"].items():
        dt2 = other["cases"][case]
        print(f"{case:<{width}}  {dt * 1e3:>8.3f} ms  {dt2 * 1e3:>8.3f} ms"
              f"  {dt2 / dt:>6.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
