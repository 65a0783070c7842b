"""Quasi-static Cosserat statics of a single-segment tendon-driven robot.

The backbone state along arclength s is a pose g(s) and the internal wrench
Lambda(s). With the strain u = C^-1 (Lambda - Lambda_ad) and body twist
xi = xi0 + u, the canonical equations are

    g'      = g hat(xi)
    Lambda' = ad(xi)^T Lambda - W(g)

integrated from g(0) = identity. The shooting unknown ``lam`` is the elastic
wrench at the base, so Lambda(0) = lam + Lambda_ad(tau).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from tdcr_plan import liegroup
from tdcr_plan._kernels import integrate, integrate_kinematics
from tdcr_plan.potentials import FREE_SPACE, field_wrench, potential, tip_potential


class ActuationError(ValueError):
    pass


class IntegrationDiverged(RuntimeError):
    def __init__(self, s):
        super().__init__(f"integration produced a non-finite state at s = {s:.6g} m")
        self.s = s


@dataclass(frozen=True)
class RobotParams:
    E: float = 50e9
    G: float = 20e9
    r_backbone: float = 1e-3
    d_tendon: float = 15e-3
    tau_max: float = 70.0
    l_min: float = 0.025
    l_max: float = 0.100
    xi0: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    # drop the axial tendon compression row of Lambda_ad when False
    axial_tendon_load: bool = True
    stiffness: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("E", "G", "r_backbone", "d_tendon", "tau_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.l_min < self.l_max:
            raise ValueError("need 0 < l_min < l_max")
        object.__setattr__(self, "xi0", tuple(float(x) for x in self.xi0))
        A = np.pi * self.r_backbone**2
        I = np.pi * self.r_backbone**4 / 4
        J = 2 * I
        C = np.array([self.E * I, self.E * I, self.G * J, self.G * A, self.G * A, self.E * A])
        C.setflags(write=False)
        object.__setattr__(self, "stiffness", C)

    @property
    def EI(self):
        return float(self.stiffness[0])

    @property
    def n_act(self):
        return 3

    def tau_bounds(self):
        lo = np.array([-self.tau_max, -self.tau_max, self.l_min])
        hi = np.array([self.tau_max, self.tau_max, self.l_max])
        return lo, hi

    def clip_tau(self, tau):
        lo, hi = self.tau_bounds()
        return np.clip(tau, lo, hi)


def stiffness_matrix(params):
    return np.diag(params.stiffness)


def check_actuation(tau, params):
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (3,):
        raise ActuationError(f"expected 3 actuation values, got shape {tau.shape}")
    for i in (0, 1):
        if abs(tau[i]) > params.tau_max:
            raise ActuationError(f"|tau{i + 1}| = {abs(tau[i]):.6g} exceeds tau_max = {params.tau_max}")
    if not params.l_min <= tau[2] <= params.l_max:
        raise ActuationError(f"length tau3 = {tau[2]:.6g} outside [{params.l_min}, {params.l_max}]")
    return tau


def actuation_wrench(tau, params):
    """Internal wrench held by the tendons; constant along s for parallel routing."""
    tau = check_actuation(tau, params)
    d = params.d_tendon
    axial = -(abs(tau[0]) + abs(tau[1])) if params.axial_tendon_load else 0.0
    return np.array([d * tau[1], -d * tau[0], 0.0, 0.0, 0.0, axial])


def strain(Lam, lam_ad, params):
    return (np.asarray(Lam) - lam_ad) / params.stiffness


def ode_rhs(g, Lam, tau, params, scene=FREE_SPACE):
    """Derivatives (g', Lambda') of the canonical equations at one point."""
    lam_ad = actuation_wrench(tau, params)
    xi = np.asarray(params.xi0) + strain(Lam, lam_ad, params)
    dg = g @ liegroup.hat(xi)
    dLam = liegroup.ad(xi).T @ Lam - field_wrench(scene, g)
    return dg, dLam


@dataclass(frozen=True)
class Configuration:
    """Discretised rod state on a uniform grid of N+1 nodes over [0, l]."""

    s: np.ndarray
    R: np.ndarray
    p: np.ndarray
    Lam: np.ndarray
    u: np.ndarray
    tau: np.ndarray
    lam: np.ndarray

    @property
    def n(self):
        return len(self.s) - 1

    @property
    def length(self):
        return float(self.s[-1])

    def pose(self, k):
        return liegroup.pose(self.R[k], self.p[k])

    @property
    def tip(self):
        return self.p[-1]

    def as_rows(self):
        """Export table: s, R (row-major), p, Lambda, u, one row per node."""
        return np.column_stack([self.s, self.R.reshape(-1, 9), self.p, self.Lam, self.u])


EXPORT_COLUMNS = (
    ["s"]
    + [f"R{i}{j}" for i in range(3) for j in range(3)]
    + ["px", "py", "pz"]
    + [f"Lam{i}" for i in range(6)]
    + [f"u{i}" for i in range(6)]
)


def save_configuration(cfg, path):
    np.savetxt(path, cfg.as_rows(), delimiter=",", header=",".join(EXPORT_COLUMNS), comments="")


def _integrate(R0, p0, Lam0, lam_ad, length, params, scene, n):
    Rs = np.empty((n + 1, 3, 3))
    ps = np.empty((n + 1, 3))
    lams = np.empty((n + 1, 6))
    status = integrate(R0, p0, Lam0, lam_ad, 1.0 / params.stiffness, np.asarray(params.xi0),
                       length, n, scene.table, Rs, ps, lams)
    if status >= 0:
        raise IntegrationDiverged(abs(length) * status / n)
    return Rs, ps, lams


def integrate_ivp(lam, tau, params, scene=FREE_SPACE, n=100):
    """Forward shooting from the base wrench ``lam`` at actuation ``tau``."""
    if n < 1:
        raise ValueError("need at least one integration step")
    tau = check_actuation(tau, params)
    lam = np.asarray(lam, dtype=float)
    lam_ad = actuation_wrench(tau, params)
    Rs, ps, lams = _integrate(np.eye(3), np.zeros(3), lam + lam_ad, lam_ad, tau[2], params, scene, n)
    u = (lams - lam_ad) / params.stiffness
    return Configuration(np.linspace(0.0, tau[2], n + 1), Rs, ps, lams, u, tau.copy(), lam.copy())


def integrate_backward(g_tip, Lam_tip, tau, params, scene=FREE_SPACE, n=100):
    """Propagate the same equations from the tip state back to s = 0.

    Returns (R, p, Lambda) arrays ordered from s = l down to s = 0.
    """
    tau = check_actuation(tau, params)
    lam_ad = actuation_wrench(tau, params)
    return _integrate(np.array(g_tip[:3, :3]), np.array(g_tip[:3, 3]), np.asarray(Lam_tip, dtype=float),
                      lam_ad, -tau[2], params, scene, n)


def recover_actuation(cfg, params):
    """Least-squares actuation from the constitutive law Lambda_ad = Lambda - C u."""
    lam_ad = np.mean(cfg.Lam - cfg.u * params.stiffness, axis=0)
    d = params.d_tendon
    return np.array([-lam_ad[1] / d, lam_ad[0] / d, cfg.length])


def total_energy(cfg, params, scene=FREE_SPACE):
    """Elastic + actuation + field energy with trapezoidal quadrature, plus tip term."""
    lam_ad = actuation_wrench(cfg.tau, params)
    u = cfg.u
    dens = 0.5 * np.sum(u * u * params.stiffness, axis=1) + u @ lam_ad
    if scene.obstacles:
        dens = dens + potential(scene, cfg.p)
    tip = tip_potential(scene, liegroup.pose(cfg.R[-1], cfg.p[-1]))
    return float(np.trapezoid(dens, cfg.s)) + tip


def kinematic_configuration(cfg, params, controls, n=None):
    """Rebuild g from the identity for a prescribed strain field.

    ``controls(s)`` maps an array of arclengths to an (m, 6) array of strains
    u. The returned Configuration carries NaN for Lambda, which the energy
    does not need.
    """
    n = cfg.n if n is None else n
    length = cfg.length
    s_half = np.linspace(0.0, length, 2 * n + 1)
    u_half = np.asarray(controls(s_half), dtype=float)
    xis = np.ascontiguousarray(u_half + np.asarray(params.xi0))
    Rs = np.empty((n + 1, 3, 3))
    ps = np.empty((n + 1, 3))
    integrate_kinematics(xis, length, n, Rs, ps)
    u = u_half[::2]
    return Configuration(s_half[::2], Rs, ps, np.full_like(u, np.nan), u, cfg.tau, cfg.lam)


def energy_variation(cfg, params, scene, eta, eps=1e-5, refine=8):
    """Central-difference derivative of the total energy along u + eps*eta.

    The solved strain is interpolated with a cubic spline and the kinematics
    re-integrated on a grid ``refine`` times finer, so the quadrature error
    stays well below the first variation being measured. Returns
    (dE/deps, E at eps = 0).
    """
    spline = CubicSpline(cfg.s, cfg.u, axis=0)
    n = cfg.n * refine

    def energy(e):
        perturbed = kinematic_configuration(cfg, params, lambda s: spline(s) + e * eta(s), n)
        return total_energy(perturbed, params, scene)

    return (energy(eps) - energy(-eps)) / (2 * eps), energy(0.0)
