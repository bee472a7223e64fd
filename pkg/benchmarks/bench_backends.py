#!/usr/bin/env python3
"""Timing table for the trajectory-ensemble kernels: numba vs pure numpy.

Runs the two hot paths (the kick-ensemble coherence series and a full
decoupling + kicks timeline ensemble) at a few problem sizes on every
available backend and prints wall times with the resulting speedup.

    python benchmarks/bench_backends.py [--repeats 3] [--jobs N]
"""

import argparse
import time

import numpy as np

from spinkick.backends import available_backends, set_jobs
from spinkick.core import SpinSystem
from spinkick.kicks import KickParams, monte_carlo_f
from spinkick.sequences import DDParams
from spinkick.spectroscopy import simulate_decay

RHO_E = 0.5 * np.eye(2, dtype=complex)


def bench_kick_ensemble(backend, n_traj, n_kicks):
    sys_ = SpinSystem(j=215.0)
    params = KickParams(theta=np.deg2rad(2.0), gamma_rate=25e3, seed=11)
    return lambda: monte_carlo_f(RHO_E, sys_, params, n_kicks, n_traj, backend=backend)


def bench_timeline(backend, n_traj, n_cycles):
    sys_ = SpinSystem(j=215.0)
    dd = DDParams(kind="cpmg", n_pulses=7, tau=3.2e-3)
    kicks = KickParams(theta=np.deg2rad(2.0), gamma_rate=25e3, seed=11)
    return lambda: simulate_decay(
        sys_, dd, kicks, None, n_cycles=n_cycles, n_traj=n_traj, backend=backend
    )


CASES = [
    ("kick ensemble 2000 x 700", bench_kick_ensemble, (2000, 700)),
    ("kick ensemble 10000 x 700", bench_kick_ensemble, (10000, 700)),
    ("cpmg+kicks 500 traj x 8 cycles", bench_timeline, (500, 8)),
    ("cpmg+kicks 2000 traj x 8 cycles", bench_timeline, (2000, 8)),
]


def measure(fn, repeats):
    fn()  # warm-up: triggers jit compilation on the compiled backend
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3, help="timed runs per case")
    ap.add_argument("--jobs", type=int, help="worker threads for the numba backend")
    args = ap.parse_args()
    if args.jobs:
        set_jobs(args.jobs)

    backends = available_backends()
    header = f"{'case':<34}" + "".join(f"{b + ' [s]':>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, setup, sizes in CASES:
        row = f"{name:<34}"
        timings = {}
        for b in backends:
            timings[b] = measure(setup(b, *sizes), args.repeats)
            row += f"{timings[b]:>12.4f}"
        if "numba" in timings and "numpy" in timings:
            row += f"{timings['numpy'] / timings['numba']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
