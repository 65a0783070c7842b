"""Command line entry point: ``tdcr-plan {plan,bench,validate}``."""

import argparse
import logging
import sys
from pathlib import Path

from tdcr_plan.planners import VARIANTS
from tdcr_plan.scenario import ScenarioError, load_scenario, parse_variants, run

EXIT_INVALID = 2


def _describe(sc):
    lines = [f"scenario {sc.name}: {len(sc.scene.obstacles)} obstacle(s)"]
    for tag, pt in (("start", sc.start), ("goal", sc.goal)):
        rep = pt.report
        lines.append(f"  {tag}: tau={list(map(float, pt.tau))} |F|={rep.norm:.2e} "
                     f"rank={rep.rank_F_lambda} sigma_min/sigma_max={rep.sigma_min / rep.sigma_max:.2e} "
                     f"tip={[round(float(v), 5) for v in pt.cfg.tip]}")
    return "\n".join(lines)


def cmd_validate(args):
    sc = load_scenario(args.scenario)
    print(_describe(sc))
    print("ok")
    return 0


def cmd_plan(args):
    sc = load_scenario(args.scenario)
    if args.budget:
        sc.planner.budget = args.budget
    out = Path(args.out)
    report = run(sc, [args.variant], [args.seed], out)
    print(report.table())
    return 0


def cmd_bench(args):
    sc = load_scenario(args.scenario)
    if args.budget:
        sc.planner.budget = args.budget
    report = run(sc, parse_variants(args.variants), args.seeds, Path(args.out))
    print(report.table())
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="tdcr-plan", description="Contact-aware path planning for a tendon-driven rod.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load a scenario and check start/goal")
    p.add_argument("--scenario", required=True, help="YAML file or preset name (scenario1, scenario2)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="one planner run")
    p.add_argument("--scenario", required=True)
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=None, help="override the node budget")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="variants x seeds with metrics.csv")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--variants", default="all", help="'all' or a comma separated list")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
