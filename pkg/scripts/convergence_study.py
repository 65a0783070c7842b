"""Grid refinement of the integrator and the small-deflection cantilever.

Prints the tip error against the analytic arc, Richardson ratios of the tip
pose for N = 25..400, and the tip deflection against F l^3 / (3 EI).
"""

import numpy as np

from tdcr_plan.mechanics import RobotParams, actuation_wrench, integrate_ivp
from tdcr_plan.potentials import Scene, SphereField
from tdcr_plan.shooting import solve_bvp

P = RobotParams()
GRIDS = (25, 50, 100, 200, 400)


def arc_error(t, l, n):
    cfg = integrate_ivp(-actuation_wrench([t, 0, l], P), [t, 0, l], P, n=n)
    kappa = P.d_tendon * t / P.EI
    stretch = 1 + abs(t) / P.stiffness[5]
    th = kappa * l
    tip = stretch * np.array([(1 - np.cos(th)) / kappa, 0.0, np.sin(th) / kappa])
    return np.linalg.norm(cfg.tip - tip) / l


def main():
    print("free arc, tip error / l")
    for t in (5.0, 30.0, 70.0):
        print(f"  tau1 = {t:5.1f}: " + "  ".join(f"N={n}: {arc_error(t, 0.1, n):.1e}" for n in GRIDS))

    scene = Scene([SphereField((0.02, 0.0, 0.06), 0.005, 0.05, 3e3)])
    lam = np.array([0.02, 0.05, 0.002, 0.4, -0.3, 1.0])
    tips = [integrate_ivp(lam, [20.0, -10.0, 0.08], P, scene, n).tip for n in GRIDS]
    gaps = [np.linalg.norm(a - b) for a, b in zip(tips, tips[1:])]
    print("\ntip refinement in a field (expect ratios near 16)")
    for n, g0, g1 in zip(GRIDS[1:], gaps, gaps[1:]):
        print(f"  N={n:4d}: |tip(N/2) - tip(N)| = {g0:.2e}, ratio {g0 / g1:.2f}")

    print("\ncantilever, deflection vs F l^3 / (3 EI)")
    for l in (0.04, 0.07, 0.1):
        for frac in (0.002, 0.01, 0.02, 0.05):
            F = 3 * P.EI * frac / l**2
            sc = Scene(tip_force=(F, 0.0, 0.0))
            pt = solve_bvp(np.zeros(6), [0, 0, l], P, sc, n=200)
            defl = integrate_ivp(pt.lam, pt.tau, P, sc, n=200).tip[0]
            beam = F * l**3 / (3 * P.EI)
            print(f"  l={l:.2f} F={F:.3f} N: {defl / l:.4f} l, beam {beam / l:.4f} l, "
                  f"diff {100 * (defl / beam - 1):+.2f}%")


if __name__ == "__main__":
    main()
