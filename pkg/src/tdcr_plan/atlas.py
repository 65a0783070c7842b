"""Tangent-space charts covering the equilibrium manifold.

A chart at x_c = (lam_c, tau_c) uses the basis Phi = [-F_lam^-1 F_tau; I],
so chart coordinates y are directly an actuation offset and
phi_c(y) = x_c + Phi y is the linear guess that shooting then corrects.
Norms on the ambient space use the diagonal metric M.
"""

from dataclasses import dataclass, field

import numpy as np

from tdcr_plan.potentials import FREE_SPACE
from tdcr_plan.shooting import DEFAULT_METRIC, TOL_RANK, jacobian, solve_bvp, stability_rank


class ChartCreationFailed(RuntimeError):
    pass


def metric_norm(dx, metric=DEFAULT_METRIC):
    dx = np.asarray(dx, dtype=float)
    return float(np.sqrt(dx @ (metric * dx)))


def metric_distance(x1, x2, metric=DEFAULT_METRIC):
    return metric_norm(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float), metric)


def tangent_basis(jac, tol=TOL_RANK):
    """Basis of ker [F_lam F_tau] with an identity actuation block."""
    jac = np.asarray(jac)
    F_lam, F_tau = jac[:, :6], jac[:, 6:]
    rank, _, _ = stability_rank(F_lam, tol)
    if rank < 6:
        raise ChartCreationFailed(f"F_lambda has rank {rank}")
    return np.vstack([-np.linalg.solve(F_lam, F_tau), np.eye(F_tau.shape[1])])


@dataclass
class Chart:
    id: int
    origin: object
    Phi: np.ndarray
    radius: float
    neighbors: dict = field(default_factory=dict)
    count: int = 0

    def __post_init__(self):
        self.x = self.origin.x
        # least-squares projector (Phi^T Phi)^-1 Phi^T
        self.proj = np.linalg.solve(self.Phi.T @ self.Phi, self.Phi.T)
        self._metric_factor = None

    def metric_factor(self, metric):
        """Upper-triangular T with ||Phi y||_M = |T y|."""
        if self._metric_factor is None:
            self._metric_factor = np.linalg.qr(np.sqrt(metric)[:, None] * self.Phi, mode="r")
        return self._metric_factor

    @property
    def dim(self):
        return self.Phi.shape[1]


def to_ambient(chart, y):
    return chart.x + chart.Phi @ np.asarray(y, dtype=float)


def to_chart_coords(chart, x):
    return chart.proj @ (np.asarray(x, dtype=float) - chart.x)


class Atlas:
    """Growing collection of charts with symmetric neighbour bookkeeping."""

    def __init__(self, params, scene=FREE_SPACE, radius=10.0, epsilon=5.0, metric=DEFAULT_METRIC, n=100):
        self.params = params
        self.scene = scene
        self.radius = radius
        self.epsilon = epsilon
        self.metric = np.asarray(metric, dtype=float)
        self.n = n
        self.charts = []
        self.selections = 0

    def __len__(self):
        return len(self.charts)

    def __getitem__(self, i):
        return self.charts[i]

    def add_chart(self, point):
        """Register a chart at a converged point and return its id."""
        jac = point.jac
        if jac is None:
            jac = jacobian(point.x, self.params, self.scene, self.n, self.metric)
            point.jac = jac
        chart = Chart(len(self.charts), point, tangent_basis(jac), self.radius)
        for other in self.charts:
            if metric_distance(other.x, chart.x, self.metric) <= 2 * self.radius:
                chart.neighbors[other.id] = to_chart_coords(chart, other.x)
                other.neighbors[chart.id] = to_chart_coords(other, chart.x)
        self.charts.append(chart)
        return chart.id

    def norm(self, dx):
        return metric_norm(dx, self.metric)

    def chart_contains(self, chart, y, x):
        """Validity radius, tangent error and the half-space cell test."""
        chart = self.charts[chart] if isinstance(chart, (int, np.integer)) else chart
        y = np.asarray(y, dtype=float)
        if self.norm(chart.Phi @ y) > self.radius:
            return False
        if self.norm(to_ambient(chart, y) - x) > self.epsilon:
            return False
        return all(2 * y @ yj <= yj @ yj for yj in chart.neighbors.values())

    def locate(self, chart_id, x):
        """Chart among ``chart_id`` and its neighbours whose cell covers x, else None."""
        chart = self.charts[chart_id]
        if self.chart_contains(chart, to_chart_coords(chart, x), x):
            return chart_id
        for j in sorted(chart.neighbors):
            other = self.charts[j]
            if self.chart_contains(other, to_chart_coords(other, x), x):
                return j
        return None

    def select_chart(self, rng):
        """Pick a chart, favouring rarely sampled ones, and count the selection."""
        counts = np.array([c.count for c in self.charts], dtype=float)
        weights = (counts.max() - counts) ** 2
        total = weights.sum()
        if total == 0:
            i = int(rng.integers(len(counts)))
        else:
            i = int(rng.choice(len(counts), p=weights / total))
        self.charts[i].count += 1
        self.selections += 1
        return i

    def random_direction(self, chart, rng):
        """Chart coordinates of a tangent direction uniform on the unit M-sphere."""
        z = rng.standard_normal(chart.dim)
        z /= np.linalg.norm(z)
        return np.linalg.solve(chart.metric_factor(self.metric), z)

    def scale_to(self, chart, y, length):
        """Rescale chart coordinates so that ||Phi y||_M = length."""
        return y * (length / self.norm(chart.Phi @ y))

    def project_to_manifold(self, chart, y, **solver_kw):
        """Shoot from phi_c(y) holding its actuation fixed; returns a ManifoldPoint."""
        chart = self.charts[chart] if isinstance(chart, (int, np.integer)) else chart
        x = to_ambient(chart, y)
        return project_guess(x, self.params, self.scene, self.n, self.metric, **solver_kw)


def project_guess(x, params, scene, n=100, metric=DEFAULT_METRIC, **solver_kw):
    """Solve F = 0 over lam from the ambient guess x; None if its tau is out of bounds."""
    x = np.asarray(x, dtype=float)
    lo, hi = params.tau_bounds()
    if np.any(x[6:] < lo) or np.any(x[6:] > hi):
        return None
    return solve_bvp(x[:6], x[6:], params, scene, n, metric=metric, **solver_kw)
