"""Continuation in tau1 along both sides of a scenario's obstacles.

Used to pick preset start and goal points: two equilibria at the same tau
that sit on different branches. Prints lam, tip and the sigma ratio for
each converged point.

    python scripts/scan_branches.py scenario1 --tau2 0 --length 0.08
"""

import argparse

import numpy as np

from tdcr_plan.mechanics import integrate_ivp
from tdcr_plan.scenario import load_scenario
from tdcr_plan.shooting import solve_bvp


def sweep(sc, lam, taus):
    for tau in taus:
        pt = solve_bvp(lam, tau, sc.robot, sc.scene)
        if not pt.converged:
            print(f"  tau1={tau[0]:6.1f}: no convergence")
            continue
        lam = pt.lam
        rep = pt.report
        tip = integrate_ivp(pt.lam, pt.tau, sc.robot, sc.scene).tip
        print(f"  tau1={tau[0]:6.1f}: lam={np.round(pt.lam, 3).tolist()} tip={np.round(tip, 4).tolist()} "
              f"sigma ratio={rep.sigma_min / rep.sigma_max:.1e}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("scenario")
    ap.add_argument("--tau2", type=float, default=0.0)
    ap.add_argument("--length", type=float, default=0.08)
    ap.add_argument("--steps", type=int, default=15)
    args = ap.parse_args()
    sc = load_scenario(args.scenario)
    grid = np.linspace(0, 60, args.steps + 1)
    for label, start, sign in (("start branch", sc.start, 1), ("goal branch", sc.goal, -1)):
        print(label)
        base = start.tau[0]
        taus = [np.array([base + sign * g, args.tau2, args.length]) for g in grid]
        taus = [t for t in taus if abs(t[0]) <= sc.robot.tau_max]
        sweep(sc, start.lam, taus)


if __name__ == "__main__":
    main()
