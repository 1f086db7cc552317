#!/usr/bin/env python3
"""Benchmark the compiled stepping kernel against the numpy fallback.

Times ``step_chunk`` on desk-scale shapes and prints steps/second plus the
speedup. Run as ``python benchmarks/bench_stepper.py``; use --steps to
change the workload.
"""

import argparse
import time

import numpy as np

from lowrank_lab.backend import available_backends, get_kernel

SHAPES = [(20, 20, 1), (20, 20, 3), (20, 20, 6), (50, 50, 3), (50, 50, 6)]


def time_backend(kernel, m, n, d, steps):
    rng = np.random.default_rng(0)
    U = 0.01 * rng.standard_normal((m, d))
    V = 0.01 * rng.standard_normal((n, d))
    sigma = np.linspace(2.0, 1.0, d) if d > 1 else np.array([1.0])
    kernel(U, V, sigma, 1e-6, 0.0, min(steps, 1000))  # warm up
    t0 = time.perf_counter()
    kernel(U, V, sigma, 1e-6, 0.0, steps)
    elapsed = time.perf_counter() - t0
    return steps / elapsed


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=1_000_000,
                        help="steps per compiled timing (python gets 1/50)")
    args = parser.parse_args()

    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    header = f"{'shape':>14} {'d':>3}"
    for name in backends:
        header += f" {name + ' steps/s':>18}"
    if "compiled" in backends:
        header += f" {'speedup':>9}"
    print(header)
    for m, n, d in SHAPES:
        rates = {}
        for name in backends:
            steps = args.steps if name == "compiled" else \
                max(1000, args.steps // 50)
            rates[name] = time_backend(get_kernel(name), m, n, d, steps)
        line = f"{f'{m}x{n}':>14} {d:>3}"
        for name in backends:
            line += f" {rates[name]:>18.3e}"
        if "compiled" in backends and "python" in backends:
            line += f" {rates['compiled'] / rates['python']:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
