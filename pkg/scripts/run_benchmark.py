"""Benchmark both presets and compare per-node wall time between them.

    python scripts/run_benchmark.py --seeds 5 --out results
"""

import argparse
import logging
from pathlib import Path

from tdcr_plan.scenario import PRESETS, load_scenario, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--variants", default="all")
    ap.add_argument("--budget", type=int, default=None)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    reports = {}
    for name in PRESETS:
        sc = load_scenario(name)
        if args.budget:
            sc.planner.budget = args.budget
        reports[name] = run(sc, args.variants, args.seeds, Path(args.out) / name)
        print(f"\n== {name}\n{reports[name].table()}")

    a1, a2 = (reports[n].aggregates() for n in PRESETS)
    print("\nper-node wall time, scenario2 vs scenario1")
    for v in a1:
        t1, t2 = a1[v]["time_per_node_s"], a2[v]["time_per_node_s"]
        print(f"  {v:<18} {1e3 * t1:7.1f} ms -> {1e3 * t2:7.1f} ms  ({100 * (t2 / t1 - 1):+.0f}%)")


if __name__ == "__main__":
    main()
