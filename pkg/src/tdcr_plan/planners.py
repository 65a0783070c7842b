"""RRT* on the equilibrium manifold (atlas-based) and two ambient-space baselines.

Variants
--------
``atlas-rrt*``
    Samples around atlas charts and steers by shooting from chart guesses.
``rrt*-tau``
    Samples actuation only; every solve starts from the start node's lam.
``rrt*-lambda-tau``
    Samples (lam, tau) in a box and shoots from the clamped sample.

All variants share the RRT* bookkeeping (k-nearest choose-parent and
rewiring) and the tip-chord edge cost.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from tdcr_plan.atlas import Atlas, ChartCreationFailed, metric_norm, to_ambient, to_chart_coords
from tdcr_plan.mechanics import IntegrationDiverged, integrate_ivp
from tdcr_plan.potentials import in_collision
from tdcr_plan.shooting import DEFAULT_METRIC, JacobianFailed, solve_bvp

log = logging.getLogger(__name__)

VARIANTS = ("atlas-rrt*", "rrt*-tau", "rrt*-lambda-tau")


@dataclass
class PlannerParams:
    R: float = 10.0
    epsilon: float = 5.0
    beta: float = 5.0
    ext_lambda_tau: float = 20.0
    ext_tau: float = 7.0
    budget: int = 300
    k_near: int = 10
    goal_tol: float = 5.0
    goal_bias: float = 0.05
    edge_resolution: int = 5
    sigma_floor: float = 1e-4
    allow_marginal: bool = False
    lambda_box: tuple = (2.0, 20.0)
    max_iterations: int = 3000
    n: int = 100
    metric: tuple = tuple(DEFAULT_METRIC)

    def __post_init__(self):
        for name in ("R", "epsilon", "beta", "ext_lambda_tau", "ext_tau", "goal_tol", "sigma_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"planner parameter {name} must be positive")
        if self.budget < 1 or self.k_near < 1 or self.max_iterations < 1:
            raise ValueError("budget, k_near and max_iterations must be >= 1")
        if self.edge_resolution < 0:
            raise ValueError("edge_resolution must be >= 0")
        self.metric = tuple(float(m) for m in self.metric)
        if len(self.metric) != 9 or min(self.metric) <= 0:
            raise ValueError("metric must have 9 positive weights")


@dataclass
class TreeNode:
    point: object
    parent: int
    cost: float
    chart: int = -1
    children: list = field(default_factory=list)


@dataclass
class PlanResult:
    variant: str
    seed: int
    nodes: list
    path: list
    cost: float
    samples_before_path: int
    time_s: float
    iterations: int
    atlas: object = None
    stats: dict = field(default_factory=dict)

    @property
    def success(self):
        return bool(self.path)

    def metrics_row(self):
        return {
            "variant": self.variant,
            "seed": self.seed,
            "samples": self.samples_before_path if self.success else None,
            "cost_mm": 1e3 * self.cost if self.success else None,
            "time_s": self.time_s,
        }


def metric_distance(x1, x2, M=DEFAULT_METRIC):
    return metric_norm(np.asarray(x1) - np.asarray(x2), np.asarray(M))


def tip_path_cost(a, b):
    """Chord length between the tips of two solved configurations (m)."""
    return float(np.linalg.norm(b.cfg.tip - a.cfg.tip))


def sample_on_atlas(atlas, pp, rng):
    """Chart-based sample: returns (chart id, x_rand, delta)."""
    c = atlas.select_chart(rng)
    chart = atlas[c]
    y = atlas.random_direction(chart, rng)
    delta = rng.uniform(0.5, 1.0)
    y = atlas.scale_to(chart, y, delta * pp.beta * pp.R)
    return c, to_ambient(chart, y), delta


class Planner:
    """One planning run; create a fresh instance per (variant, seed)."""

    def __init__(self, variant, start, goal, robot, scene, pp=None, seed=0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        self.variant = variant
        self.robot = robot
        self.scene = scene
        self.pp = pp or PlannerParams()
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.M = np.asarray(self.pp.metric)
        self.start = self._prepare(start)
        self.goal = self._prepare(goal)
        self.nodes = []
        self.X = np.empty((self.pp.budget, 9))
        self.atlas = None
        self.stats = {"solves": 0, "solve_failures": 0, "unstable": 0, "collisions": 0,
                      "edge_checks": 0, "edge_failures": 0, "charts": 0, "rewires": 0}
        if variant == "atlas-rrt*":
            self.atlas = Atlas(robot, scene, self.pp.R, self.pp.epsilon, self.M, self.pp.n)

    def _prepare(self, point):
        if point.cfg is None:
            point.cfg = integrate_ivp(point.lam, point.tau, self.robot, self.scene, self.pp.n)
        return point

    # -- tree -------------------------------------------------------------

    def _weights(self):
        if self.variant == "rrt*-tau":
            return np.concatenate([np.zeros(6), self.M[6:]])
        return self.M

    def _dists(self, x):
        d = self.X[: len(self.nodes)] - x
        return np.sqrt(np.einsum("ij,j,ij->i", d, self._weights(), d))

    def nearest(self, x):
        return int(np.argmin(self._dists(x)))

    def near(self, x, k):
        d = self._dists(x)
        k = min(k, len(d))
        idx = np.argpartition(d, k - 1)[:k]
        return idx[np.argsort(d[idx], kind="stable")]

    def _add_node(self, point, parent, cost, chart=-1):
        i = len(self.nodes)
        self.nodes.append(TreeNode(point, parent, cost, chart))
        self.X[i] = point.x
        if parent >= 0:
            self.nodes[parent].children.append(i)
        return i

    def _propagate(self, i, delta):
        stack = [i]
        while stack:
            j = stack.pop()
            self.nodes[j].cost += delta
            stack.extend(self.nodes[j].children)

    # -- feasibility ------------------------------------------------------

    def _solve(self, lam_guess, tau):
        lo, hi = self.robot.tau_bounds()
        tau = np.clip(tau, lo, hi)
        self.stats["solves"] += 1
        try:
            pt = solve_bvp(lam_guess, tau, self.robot, self.scene, self.pp.n, metric=self.M)
        except (IntegrationDiverged, JacobianFailed):
            pt = None
        if pt is None or not pt.converged:
            self.stats["solve_failures"] += 1
            return None
        rep = pt.report
        if not self.pp.allow_marginal and (rep.rank_F_lambda < 6 or rep.sigma_min < self.pp.sigma_floor * rep.sigma_max):
            self.stats["unstable"] += 1
            return None
        pt.cfg = integrate_ivp(pt.lam, pt.tau, self.robot, self.scene, self.pp.n)
        if in_collision(self.scene, pt.cfg, self.robot.r_backbone):
            self.stats["collisions"] += 1
            return None
        return pt

    def edge_free(self, a, b):
        self.stats["edge_checks"] += 1
        ok = edge_collision_free(a, b, self.robot, self.scene, self.pp.edge_resolution, self.pp.n, self.M)
        if not ok:
            self.stats["edge_failures"] += 1
        return ok

    # -- variant-specific extension ----------------------------------------

    def _goal_sample(self):
        return self.rng.random() < self.pp.goal_bias

    def _goal_target(self):
        """Point drawn uniformly from the goal-tolerance ball in the metric."""
        z = self.rng.standard_normal(9)
        z *= self.pp.goal_tol * self.rng.random() ** (1 / 9) / np.linalg.norm(z)
        return self.goal.x + z / np.sqrt(self.M)

    def _extend_atlas(self):
        atlas = self.atlas
        pp = self.pp
        if self._goal_sample():
            c = None
            x_rand = self._goal_target()
            delta = self.rng.uniform(0.5, 1.0)
        else:
            c, x_rand, delta = sample_on_atlas(atlas, pp, self.rng)
        near = self.nearest(x_rand)
        return self.steer(near, x_rand, c, delta)

    def steer(self, near, x_rand, c, delta):
        """Shoot toward x_rand from the tree node ``near``; returns (point, near, chart) or None."""
        atlas = self.atlas
        pp = self.pp
        node = self.nodes[near]
        x_near = node.point.x
        cn = node.chart
        if c is None:
            # goal samples steer straight through the ambient space
            direction = x_rand - x_near
            length = metric_norm(direction, self.M)
            if length == 0:
                return None
            x_rand = x_near + min(delta * pp.beta * pp.R, length) * direction / length
            c = cn
        elif c != cn:
            chart = atlas[cn]
            target = to_ambient(chart, to_chart_coords(chart, x_rand))
            direction = target - x_near
            length = metric_norm(direction, self.M)
            if length == 0:
                return None
            x_rand = x_near + delta * pp.beta * pp.R * direction / length
            c = cn
        pt = self._solve(x_rand[:6], x_rand[6:])
        if pt is None or not self.edge_free(node.point, pt):
            return None
        cid = atlas.locate(c, pt.x)
        if cid is None:
            try:
                cid = atlas.add_chart(pt)
                self.stats["charts"] += 1
            except (ChartCreationFailed, JacobianFailed):
                cid = c
        return pt, near, cid

    def _extend_tau(self):
        lo, hi = self.robot.tau_bounds()
        tau_rand = self._goal_target()[6:] if self._goal_sample() else self.rng.uniform(lo, hi)
        x_rand = np.concatenate([np.zeros(6), tau_rand])
        near = self.nearest(x_rand)
        node = self.nodes[near]
        d = tau_rand - node.point.tau
        length = metric_norm(d, self.M[6:])
        if length == 0:
            return None
        if length > self.pp.ext_tau:
            d *= self.pp.ext_tau / length
        pt = self._solve(self.start.lam, node.point.tau + d)
        if pt is None or not self.edge_free(node.point, pt):
            return None
        return pt, near, -1

    def _extend_lambda_tau(self):
        if self._goal_sample():
            x_rand = self._goal_target()
        else:
            lo, hi = self.robot.tau_bounds()
            m, f = self.pp.lambda_box
            box = np.array([m, m, m, f, f, f])
            x_rand = np.concatenate([self.rng.uniform(-box, box), self.rng.uniform(lo, hi)])
        near = self.nearest(x_rand)
        node = self.nodes[near]
        d = x_rand - node.point.x
        length = metric_norm(d, self.M)
        if length == 0:
            return None
        if length > self.pp.ext_lambda_tau:
            d *= self.pp.ext_lambda_tau / length
        guess = node.point.x + d
        pt = self._solve(guess[:6], guess[6:])
        if pt is None or not self.edge_free(node.point, pt):
            return None
        return pt, near, -1

    # -- main loop --------------------------------------------------------

    def run(self):
        t0 = time.perf_counter()
        pp = self.pp
        root_chart = -1
        if self.atlas is not None:
            root_chart = self.atlas.add_chart(self.start)
            self.stats["charts"] += 1
        self._add_node(self.start, -1, 0.0, root_chart)
        extend = {"atlas-rrt*": self._extend_atlas, "rrt*-tau": self._extend_tau,
                  "rrt*-lambda-tau": self._extend_lambda_tau}[self.variant]
        goal_nodes = []
        first_found = None
        if metric_distance(self.start.x, self.goal.x, self.M) <= pp.goal_tol:
            goal_nodes.append(0)
            first_found = 0
        iterations = 0
        while len(self.nodes) < pp.budget and iterations < pp.max_iterations:
            iterations += 1
            out = extend()
            if out is None:
                continue
            pt, near, chart = out
            i = self._insert(pt, near, chart)
            if metric_distance(pt.x, self.goal.x, self.M) <= pp.goal_tol:
                goal_nodes.append(i)
                if first_found is None:
                    first_found = len(self.nodes) - 1
                    log.info("%s seed %d: path after %d samples", self.variant, self.seed, first_found)
        path, cost = [], float("nan")
        if goal_nodes:
            best = min(goal_nodes, key=lambda j: self.nodes[j].cost)
            cost = self.nodes[best].cost
            j = best
            while j >= 0:
                path.append(j)
                j = self.nodes[j].parent
            path.reverse()
        elapsed = time.perf_counter() - t0
        return PlanResult(self.variant, self.seed, self.nodes, path, cost,
                          first_found if first_found is not None else -1, elapsed, iterations,
                          self.atlas, dict(self.stats))

    def _insert(self, pt, near, chart):
        """Choose the cheapest feasible parent among the k nearest and rewire."""
        nodes = self.nodes
        cand = self.near(pt.x, self.pp.k_near)
        costs = {int(j): nodes[j].cost + tip_path_cost(nodes[j].point, pt) for j in cand}
        costs.setdefault(near, nodes[near].cost + tip_path_cost(nodes[near].point, pt))
        parent = near
        for j in sorted(costs, key=lambda j: (costs[j], j)):
            if costs[j] >= costs[near]:
                break
            if self.edge_free(nodes[j].point, pt):
                parent = j
                break
        i = self._add_node(pt, parent, costs[parent], chart)
        for j in cand:
            j = int(j)
            if j == parent:
                continue
            new_cost = nodes[i].cost + tip_path_cost(pt, nodes[j].point)
            if new_cost < nodes[j].cost - 1e-12 and not self._is_ancestor(j, i) and self.edge_free(pt, nodes[j].point):
                old = nodes[j].parent
                nodes[old].children.remove(j)
                nodes[j].parent = i
                nodes[i].children.append(j)
                self._propagate(j, new_cost - nodes[j].cost)
                self.stats["rewires"] += 1
        return i

    def _is_ancestor(self, a, b):
        while b >= 0:
            if b == a:
                return True
            b = self.nodes[b].parent
        return False


def edge_collision_free(a, b, robot, scene, m=5, n=100, metric=DEFAULT_METRIC):
    """Shoot m interior points of the straight (lam, tau) segment and check each.

    An interior solve that fails to converge counts as a collision. With
    m = 0 only the endpoints are checked, which is not a safe edge test.
    """
    xa, xb = a.x, b.x
    for cfg_pt in (a, b):
        if cfg_pt.cfg is not None and in_collision(scene, cfg_pt.cfg, robot.r_backbone):
            return False
    if np.allclose(xa, xb):
        return True
    for t in np.arange(1, m + 1) / (m + 1):
        x = (1 - t) * xa + t * xb
        try:
            pt = solve_bvp(x[:6], x[6:], robot, scene, n, metric=metric, with_rank=False)
        except (IntegrationDiverged, JacobianFailed):
            return False
        if not pt.converged:
            return False
        cfg = integrate_ivp(pt.lam, pt.tau, robot, scene, n)
        if in_collision(scene, cfg, robot.r_backbone):
            return False
    return True


def plan(variant, start, goal, robot, scene, pp=None, seed=0):
    return Planner(variant, start, goal, robot, scene, pp, seed).run()
