#!/usr/bin/env python3
"""Time the SGDA inner-loop backends on a realistic training workload.

Runs the same seeded training job once per built backend (numpy reference
and, when available, the compiled extension) and reports wall time per run,
iterations per second, and the speedup of the compiled kernel. The two
backends follow identical update semantics, so their outputs are also
compared here as a sanity line (max parameter deviation).

Usage:
    python benchmarks/bench_kernels.py [--n 2000] [--iters 20000] [--batch 4]
"""

import argparse
import time

import numpy as np

from fermi import (
    LinearSoftmaxModel,
    SolverConfig,
    SynthConfig,
    demographic_parity,
    kernels,
    sgda_train,
    synthesize_biased,
)


def run_once(dataset, config, backend):
    previous = kernels.select(backend)
    try:
        model0 = LinearSoftmaxModel.zeros(dataset.m, dataset.d)
        start = time.perf_counter()
        model, _, trace = sgda_train(dataset, model0, demographic_parity(), config)
        elapsed = time.perf_counter() - start
    finally:
        kernels.select(previous)
    return model, trace, elapsed


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000, help="dataset size")
    parser.add_argument("--d", type=int, default=5, help="feature dimension")
    parser.add_argument("--iters", type=int, default=20000)
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--lam", type=float, default=10.0)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    dataset = synthesize_biased(
        SynthConfig(n=args.n, d=args.d, bias_strength=2.0, group_balance=0.5,
                    noise_sd=1.0, seed=1)
    )
    # diagnostic_every=0: no full-batch probes, so the loop itself is timed.
    config = SolverConfig(
        lam=args.lam, eta_theta=6e-4, eta_w=3e-3, batch_size=args.batch,
        iterations=args.iters, seed=0, diagnostic_every=0,
    )

    print(f"workload: n={args.n} d={args.d} batch={args.batch} "
          f"T={args.iters} lam={args.lam}")
    print(f"backends built: {', '.join(kernels.available())}")

    results = {}
    for backend in kernels.available():
        best = float("inf")
        for _ in range(args.repeats):
            model, trace, elapsed = run_once(dataset, config, backend)
            best = min(best, elapsed)
        results[backend] = (best, model)
        print(f"{backend:>9}: {best:8.3f} s   {args.iters / best:12.0f} iters/s")

    if "compiled" in results and "python" in results:
        speedup = results["python"][0] / results["compiled"][0]
        dev = max(
            np.abs(results["python"][1].weights - results["compiled"][1].weights).max(),
            np.abs(results["python"][1].bias - results["compiled"][1].bias).max(),
        )
        print(f"speedup (python/compiled): {speedup:.1f}x")
        print(f"max parameter deviation between backends: {dev:.3e}")


if __name__ == "__main__":
    main()
