#!/usr/bin/env python3
"""Benchmark the pure Python kernel against the compiled extension.

Runs the three-tank scenario through both backends on one compiled diagram,
checks the traces agree bit for bit, and reports wall times and the speedup.
Usage: python benchmarks/bench_kernels.py [--steps N] [--repeat K]
"""

import argparse
import importlib
import time

import numpy as np

from hbgsim.ibd import compile_graph
from hbgsim.kernels import RK4, _pure
from hbgsim.model import initial_mode
from hbgsim.program import build_program
from hbgsim.threetank import TankParams, build_three_tank


def load_compiled():
    try:
        return importlib.import_module("hbgsim.kernels._speedups")
    except ImportError:
        return None


def bench(impl, prog, mode0, steps, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = impl.run(prog, np.zeros(len(prog.state_slots)), mode0,
                       0.01, steps, RK4, 1, 1e12, False)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=6000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    g = build_three_tank(TankParams())
    ibd = compile_graph(g)
    prog = build_program(ibd, g)
    mode0 = np.array([1 if b else 0 for b in initial_mode(g)], dtype=np.uint8)

    print(f"three-tank scenario, rk4, {args.steps} steps, "
          f"{len(ibd.blocks)} blocks, best of {args.repeat}")
    t_pure, out_pure = bench(_pure, prog, mode0, args.steps, args.repeat)
    print(f"  pure python : {t_pure * 1e3:9.2f} ms "
          f"({args.steps / t_pure:,.0f} steps/s)")

    speedups = load_compiled()
    if speedups is None:
        print("  compiled    : not built (pip install -e . rebuilds it)")
        return
    t_fast, out_fast = bench(speedups, prog, mode0, args.steps, args.repeat)
    print(f"  compiled    : {t_fast * 1e3:9.2f} ms "
          f"({args.steps / t_fast:,.0f} steps/s)")
    print(f"  speedup     : {t_pure / t_fast:9.1f}x")

    same = (np.array_equal(out_pure["probes"], out_fast["probes"])
            and out_pure["events"] == out_fast["events"])
    print(f"  traces bit-identical: {same}")
    if not same:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
