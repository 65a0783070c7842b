"""Shooting residual, its Jacobian, a Levenberg-Marquardt solver and the rank test.

A point of the ambient space is x = (lam, tau) in R^6 x R^3. The residual
F(lam, tau) = Lambda(l) - W+(g(l)) vanishes on equilibria; the regular part
of the zero set, where F_lam has full rank, is the planning manifold.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from tdcr_plan._kernels import integrate_tip_batch
from tdcr_plan.mechanics import IntegrationDiverged, check_actuation, integrate_ivp
from tdcr_plan.potentials import FREE_SPACE

log = logging.getLogger(__name__)

TOL_F = 1e-8
TOL_RANK = 1e-6
L_CHAR = 0.05
MAX_ITER = 100
# residual weights: moments divided by a characteristic length
RESIDUAL_WEIGHTS = np.array([1 / L_CHAR] * 3 + [1.0] * 3)
DEFAULT_METRIC = np.array([1e2, 1e2, 1e2, 0.8, 0.8, 0.8, 1.0, 1.0, 1e4])


class JacobianFailed(RuntimeError):
    pass


@dataclass
class ResidualReport:
    F_value: np.ndarray
    iterations: int
    converged: bool
    rank_F_lambda: int = -1
    sigma_min: float = float("nan")
    sigma_max: float = float("nan")
    evaluations: int = 0

    @property
    def norm(self):
        return residual_norm(self.F_value)


@dataclass
class ManifoldPoint:
    lam: np.ndarray
    tau: np.ndarray
    cfg: object = None
    report: ResidualReport = None
    jac: np.ndarray = field(default=None, repr=False)

    @property
    def x(self):
        return np.concatenate([self.lam, self.tau])

    @property
    def converged(self):
        return self.report is not None and self.report.converged

    @property
    def stable(self):
        return self.report is not None and self.report.rank_F_lambda == 6

    @classmethod
    def from_x(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[:6].copy(), x[6:].copy())


def residual_norm(F):
    return float(np.linalg.norm(np.asarray(F) * RESIDUAL_WEIGHTS))


def _lam_ad_batch(taus, params):
    d = params.d_tendon
    out = np.zeros((len(taus), 6))
    out[:, 0] = d * taus[:, 1]
    out[:, 1] = -d * taus[:, 0]
    if params.axial_tendon_load:
        out[:, 5] = -(np.abs(taus[:, 0]) + np.abs(taus[:, 1]))
    return out


def residual_batch(xs, params, scene=FREE_SPACE, n=100):
    """Residuals for an (m, 9) array of ambient points; NaN rows mark divergence.

    Actuation bounds are not enforced here so finite differences may step
    slightly outside them.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m = len(xs)
    lam_ad = _lam_ad_batch(xs[:, 6:], params)
    R = np.empty((m, 3, 3))
    p = np.empty((m, 3))
    lam_tip = np.empty((m, 6))
    status = integrate_tip_batch(np.ascontiguousarray(xs[:, :6] + lam_ad), lam_ad, 1.0 / params.stiffness,
                                 np.asarray(params.xi0), np.ascontiguousarray(xs[:, 8]), n, scene.table,
                                 R, p, lam_tip)
    F = lam_tip
    if any(scene.tip_force):
        F[:, 3:] -= np.einsum("kji,j->ki", R, np.asarray(scene.tip_force))
    F[status >= 0] = np.nan
    return F


def residual(x, params, scene=FREE_SPACE, n=100):
    """F(lam, tau) at one point; raises IntegrationDiverged on blow-up."""
    x = x.x if isinstance(x, ManifoldPoint) else np.asarray(x, dtype=float)
    check_actuation(x[6:], params)
    F = residual_batch(x[None], params, scene, n)[0]
    if not np.all(np.isfinite(F)):
        raise IntegrationDiverged(float("nan"))
    return F


def fd_steps(x, metric=DEFAULT_METRIC, rel=1e-6):
    """Per-coordinate difference steps, isotropic in the metric's units."""
    w = np.sqrt(metric)
    return rel * np.maximum(1.0, np.abs(x) * w) / w


def jacobian(x, params, scene=FREE_SPACE, n=100, metric=DEFAULT_METRIC, cols=None, steps=None):
    """Central-difference Jacobian [F_lam F_tau] (6 x 9) or selected columns."""
    x = x.x if isinstance(x, ManifoldPoint) else np.asarray(x, dtype=float)
    cols = np.arange(len(x)) if cols is None else np.asarray(cols)
    h = fd_steps(x, metric) if steps is None else np.asarray(steps, dtype=float)
    pts = np.repeat(x[None], 2 * len(cols), axis=0)
    for j, c in enumerate(cols):
        pts[2 * j, c] += h[c]
        pts[2 * j + 1, c] -= h[c]
    F = residual_batch(pts, params, scene, n)
    if not np.all(np.isfinite(F)):
        raise JacobianFailed("integration failed at a perturbed point")
    return ((F[0::2] - F[1::2]) / (2 * h[cols])[:, None]).T


def stability_rank(F_lam, tol=TOL_RANK):
    """(rank, sigma_min, sigma_max) of F_lam with a tolerance relative to sigma_max."""
    sv = np.linalg.svd(np.asarray(F_lam), compute_uv=False)
    rank = int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0
    return rank, float(sv[-1]), float(sv[0])


def solve_bvp(lam_guess, tau, params, scene=FREE_SPACE, n=100, tol=TOL_F, max_iter=MAX_ITER,
              metric=DEFAULT_METRIC, with_rank=True):
    """Levenberg-Marquardt on lam with tau held fixed.

    Returns a ManifoldPoint whose report says whether ||F|| <= tol was
    reached; on failure the best iterate is returned. With ``with_rank`` the
    lam-block of the Jacobian at the final iterate is stored on the point and
    its rank recorded.
    """
    tau = check_actuation(np.array(tau, dtype=float), params)
    lam = np.array(lam_guess, dtype=float)
    F = residual_batch(np.concatenate([lam, tau])[None], params, scene, n)[0]
    evals = 1
    if not np.all(np.isfinite(F)):
        raise IntegrationDiverged(float("nan"))
    r = F * RESIDUAL_WEIGHTS
    cost = float(r @ r)
    mu = 1e-3
    it = 0
    J = None
    while np.sqrt(cost) > tol and it < max_iter:
        it += 1
        if J is None:
            J = jacobian(np.concatenate([lam, tau]), params, scene, n, metric, cols=range(6))
            evals += 12
            Jw = J * RESIDUAL_WEIGHTS[:, None]
            A = Jw.T @ Jw
            g = Jw.T @ r
            D = np.diag(np.maximum(np.diag(A), 1e-12))
        try:
            step = np.linalg.solve(A + mu * D, -g)
        except np.linalg.LinAlgError:
            mu *= 10
            continue
        trial = lam + step
        F_t = residual_batch(np.concatenate([trial, tau])[None], params, scene, n)[0]
        evals += 1
        r_t = F_t * RESIDUAL_WEIGHTS
        cost_t = float(r_t @ r_t) if np.all(np.isfinite(r_t)) else np.inf
        if cost_t < cost:
            lam, F, r, cost = trial, F_t, r_t, cost_t
            mu = max(mu / 10, 1e-12)
            J = None
        else:
            mu *= 10
            if mu > 1e12:
                break
    converged = bool(np.sqrt(cost) <= tol)
    report = ResidualReport(F, it, converged, evaluations=evals)
    point = ManifoldPoint(lam, tau, report=report)
    if with_rank and converged:
        full = jacobian(point.x, params, scene, n, metric)
        report.evaluations += 18
        point.jac = full
        report.rank_F_lambda, report.sigma_min, report.sigma_max = stability_rank(full[:, :6])
    log.debug("solve_bvp: iters=%d |F|=%.3g converged=%s sigma_min=%.3g", it, np.sqrt(cost), converged,
              report.sigma_min)
    return point


def attach_configuration(point, params, scene=FREE_SPACE, n=100):
    if point.cfg is None:
        point.cfg = integrate_ivp(point.lam, point.tau, params, scene, n)
    return point.cfg
