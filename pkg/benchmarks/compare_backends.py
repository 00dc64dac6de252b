#!/usr/bin/env python3
"""Benchmark the compiled step kernel against the numpy fallback.

Both backends implement identical arithmetic (the test suite checks bitwise
agreement); this script measures how much the fused compiled loop saves on
the default problem, with and without heavy spike-drop churn.

Usage: python3 benchmarks/compare_backends.py [--n-side N] [--repeats R]
"""

import argparse
import time

from spikefem.experiments import build_problem
from spikefem.faults import FaultSpec
from spikefem.network import NetworkConfig, build_network
from spikefem.simulator import available_backends, run


def time_trial(net, spec, backend, repeats):
    best = float("inf")
    result = None
    for rep in range(repeats):
        t0 = time.perf_counter()
        result = run(net, spec, seed=1, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-side", type=int, default=17)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    problem = build_problem(args.n_side)
    cases = [
        ("npm=16, no faults", NetworkConfig(npm=16), FaultSpec()),
        ("npm=16, drop p=0.9", NetworkConfig(npm=16), FaultSpec(drop_p=0.9)),
        ("npm=4,  no faults", NetworkConfig(npm=4), FaultSpec()),
    ]
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    print(f"problem: n_side={args.n_side} "
          f"({problem.system.n_dofs} unknowns), 20000 steps per trial")
    print()
    header = f"{'case':<22}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, config, spec in cases:
        net = build_network(problem.system, config)
        times = []
        for backend in backends:
            best, result = time_trial(net, spec, backend, args.repeats)
            times.append(best)
        row = f"{label:<22}" + "".join(f"{t * 1e3:>12.0f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.1f}x" if times[0] < times[1] \
                else f"{times[0] / times[1]:>9.1f}x"
        print(row + f"   ({result.spike_count_total} spikes)")


if __name__ == "__main__":
    main()
