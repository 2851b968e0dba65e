"""Throughput comparison of the trade kernel backends.

Runs the same workload once with the numba kernel and once with the pure
numpy/python fallback (selected via PARETOMARKET_NO_NUMBA=1) and prints
attempts per second for each. The workload itself runs in a subprocess
because the backend is chosen at import time.

Usage:
    python3 benchmarks/bench_kernels.py [--steps N] [--agents N] [--classes K]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def run_workload(steps: int, agents: int, classes: int, seed: int) -> dict:
    from paretomarket import BACKEND
    from paretomarket.market import build_goods, initial_allocation
    from paretomarket.simulate import SimConfig, run_simulation
    from paretomarket.wealth import build_staircase

    stair = build_staircase(1.5, 1.0, 1.1, 64, agents)
    wealth = stair.expand()
    goods = build_goods(wealth, ratio=1 / 1.2, k_classes=classes, pi_1=0.005)

    # warm up: triggers jit compilation and allocation outside the timer
    warm = SimConfig(total_steps=20_000, equilibration_steps=10_000, seed=seed)
    run_simulation(wealth, goods, warm)

    cfg = SimConfig(total_steps=steps, equilibration_steps=0, seed=seed)
    t0 = time.perf_counter()
    obs = run_simulation(wealth, goods, cfg)
    elapsed = time.perf_counter() - t0
    return {
        "backend": BACKEND,
        "steps": steps,
        "elapsed_s": elapsed,
        "steps_per_s": steps / elapsed,
        "p_bar": obs.p_bar,
        "successes": int(obs.successes.sum()),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=20_000_000)
    parser.add_argument("--agents", type=int, default=10_000)
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--python-steps", type=int, default=None,
                        help="smaller budget for the python backend "
                             "(default: steps / 100)")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(json.dumps(run_workload(args.steps, args.agents, args.classes, args.seed)))
        return 0

    py_steps = args.python_steps or max(args.steps // 100, 10_000)
    results = []
    for flag, steps in (("0", args.steps), ("1", py_steps)):
        env = dict(os.environ, PARETOMARKET_NO_NUMBA=flag)
        cmd = [
            sys.executable, os.path.abspath(__file__), "--worker",
            "--steps", str(steps), "--agents", str(args.agents),
            "--classes", str(args.classes), "--seed", str(args.seed),
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return 1
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    fast, slow = results
    print(f"agents={args.agents} classes={args.classes}")
    for r in results:
        print(f"  {r['backend']:>7}: {r['steps']:>12,} steps in "
              f"{r['elapsed_s']:8.2f} s  ->  {r['steps_per_s']:12,.0f} steps/s "
              f"(p_bar={r['p_bar']:.4f})")
    print(f"  speedup: {fast['steps_per_s'] / slow['steps_per_s']:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
