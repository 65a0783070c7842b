"""Scenario files, the benchmark harness and result export.

A scenario is a YAML document with five sections::

    name: scenario1
    robot:   {E: 5.0e10, d_tendon: 0.015, ...}          # RobotParams fields
    scene:
      spheres:  [{center: [x, y, z], r_solid: .., r_field: .., k: ..}]
      capsules: [{a: [..], b: [..], r_solid: .., r_field: .., k: ..}]
      tip_force: [fx, fy, fz]                          # optional
    start:   {lam: [6 values], tau: [tau1, tau2, l]}
    goal:    {lam: [...], tau: [...]}
    planner: {budget: 300, goal_tol: 5.0, ...}        # PlannerParams fields

Start and goal ``lam`` values are initial guesses; they are re-solved on load
and must converge to stable, collision-free equilibria.
"""

import csv
import dataclasses
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from tdcr_plan.mechanics import ActuationError, IntegrationDiverged, RobotParams, integrate_ivp
from tdcr_plan.planners import VARIANTS, PlannerParams, plan
from tdcr_plan.potentials import CapsuleField, Scene, SphereField, in_collision
from tdcr_plan.shooting import JacobianFailed, solve_bvp

log = logging.getLogger(__name__)

PRESETS = ("scenario1", "scenario2")
METRIC_COLUMNS = ("variant", "seed", "samples", "cost_mm", "time_s")


class ScenarioError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponents without a sign (5e10) as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[0-9][0-9_]*[eE][-+]?[0-9]+
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


@dataclass
class Scenario:
    name: str
    robot: RobotParams
    scene: Scene
    start: object
    goal: object
    planner: PlannerParams
    source: str = ""


def _fields(cls):
    return {f.name for f in dataclasses.fields(cls) if f.init}


def _vector(value, n, where):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected {n} numbers, got {value!r}") from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: expected {n} finite numbers, got {value!r}")
    return arr


def _section(doc, key, required=True):
    sec = doc.get(key)
    if sec is None:
        if required:
            raise ScenarioError(f"{key}: missing section")
        return {}
    if not isinstance(sec, dict):
        raise ScenarioError(f"{key}: expected a mapping")
    return sec


def _build(cls, sec, where):
    unknown = set(sec) - _fields(cls)
    if unknown:
        raise ScenarioError(f"{where}.{sorted(unknown)[0]}: unknown field")
    try:
        return cls(**sec)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{where}: {e}") from None


def _obstacle(cls, entry, where, vectors):
    if not isinstance(entry, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    entry = dict(entry)
    for key in vectors:
        if key not in entry:
            raise ScenarioError(f"{where}.{key}: missing")
        entry[key] = tuple(_vector(entry[key], 3, f"{where}.{key}"))
    for key in ("r_solid", "r_field"):
        if key not in entry:
            raise ScenarioError(f"{where}.{key}: missing")
    return _build(cls, entry, where)


def parse_scene(sec):
    unknown = set(sec) - {"spheres", "capsules", "tip_force"}
    if unknown:
        raise ScenarioError(f"scene.{sorted(unknown)[0]}: unknown field")
    obs = [_obstacle(SphereField, e, f"scene.spheres[{i}]", ("center",))
           for i, e in enumerate(sec.get("spheres") or [])]
    obs += [_obstacle(CapsuleField, e, f"scene.capsules[{i}]", ("a", "b"))
            for i, e in enumerate(sec.get("capsules") or [])]
    tip = _vector(sec.get("tip_force", [0, 0, 0]), 3, "scene.tip_force")
    return Scene(obs, tuple(tip))


def solve_endpoint(sec, where, robot, scene, n):
    """Converged, stable, collision-free ManifoldPoint from a {lam, tau} entry."""
    unknown = set(sec) - {"lam", "tau"}
    if unknown:
        raise ScenarioError(f"{where}.{sorted(unknown)[0]}: unknown field")
    lam = _vector(sec.get("lam", np.zeros(6)), 6, f"{where}.lam")
    tau = _vector(sec.get("tau"), 3, f"{where}.tau")
    try:
        pt = solve_bvp(lam, tau, robot, scene, n)
    except ActuationError as e:
        raise ScenarioError(f"{where}.tau: {e}") from None
    except (IntegrationDiverged, JacobianFailed) as e:
        raise ScenarioError(f"{where}: {e}") from None
    if not pt.converged:
        raise ScenarioError(f"{where}: shooting did not converge (|F| = {pt.report.norm:.3g})")
    if not pt.stable:
        raise ScenarioError(f"{where}: equilibrium is not stable (rank F_lam = {pt.report.rank_F_lambda})")
    pt.cfg = integrate_ivp(pt.lam, pt.tau, robot, scene, n)
    if in_collision(scene, pt.cfg, robot.r_backbone):
        raise ScenarioError(f"{where}: configuration is in collision")
    return pt


def parse_scenario(doc, source=""):
    if not isinstance(doc, dict):
        raise ScenarioError("scenario file must contain a mapping")
    unknown = set(doc) - {"name", "robot", "scene", "start", "goal", "planner"}
    if unknown:
        raise ScenarioError(f"{sorted(unknown)[0]}: unknown section")
    robot_sec = dict(_section(doc, "robot", required=False))
    if "xi0" in robot_sec:
        robot_sec["xi0"] = tuple(_vector(robot_sec["xi0"], 6, "robot.xi0"))
    robot = _build(RobotParams, robot_sec, "robot")
    scene = parse_scene(_section(doc, "scene", required=False))
    pp_sec = dict(_section(doc, "planner", required=False))
    for key in ("metric", "lambda_box"):
        if key in pp_sec and isinstance(pp_sec[key], list):
            pp_sec[key] = tuple(pp_sec[key])
    pp = _build(PlannerParams, pp_sec, "planner")
    start = solve_endpoint(_section(doc, "start"), "start", robot, scene, pp.n)
    goal = solve_endpoint(_section(doc, "goal"), "goal", robot, scene, pp.n)
    return Scenario(str(doc.get("name", Path(source).stem or "scenario")), robot, scene, start, goal, pp, source)


def preset_path(name):
    return resources.files("tdcr_plan") / "presets" / f"{name}.yaml"


def load_scenario(path):
    """Load and validate a scenario file; a bare preset name is also accepted."""
    if str(path) in PRESETS:
        path = preset_path(str(path))
    try:
        text = Path(str(path)).read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}") from None
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as e:
        raise ScenarioError(f"invalid YAML in {path}: {e}") from None
    return parse_scenario(doc, str(path))


# -- harness ------------------------------------------------------------------


def variant_slug(variant):
    """File-name-safe form of a variant name."""
    return variant.replace("*", "-star")


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


@dataclass
class RunReport:
    scenario: str
    results: list = field(default_factory=list)

    @property
    def rows(self):
        return [r.metrics_row() for r in self.results]

    def aggregates(self):
        """Per-variant success count and means (samples and cost over successes)."""
        out = {}
        for v in dict.fromkeys(r.variant for r in self.results):
            runs = [r for r in self.results if r.variant == v]
            ok = [r for r in runs if r.success]
            nodes = sum(len(r.nodes) for r in runs)
            out[v] = {
                "variant": v,
                "runs": len(runs),
                "successes": len(ok),
                "samples": float(np.mean([r.samples_before_path for r in ok])) if ok else None,
                "cost_mm": float(np.mean([1e3 * r.cost for r in ok])) if ok else None,
                "time_s": float(np.mean([r.time_s for r in runs])),
                "time_per_node_s": sum(r.time_s for r in runs) / nodes,
            }
        return out

    def table(self):
        lines = ["variant            seed  samples  cost_mm   time_s"]
        for row in self.rows:
            lines.append(f"{row['variant']:<18} {row['seed']:>4} {_fmt(row['samples']):>8} "
                         f"{_fmt(row['cost_mm']):>8} {_fmt(row['time_s']):>8}")
        lines.append("")
        lines.append("variant            success  samples  cost_mm   time_s")
        for a in self.aggregates().values():
            lines.append(f"{a['variant']:<18} {a['successes']}/{a['runs']:<5} {_fmt(a['samples']):>8} "
                         f"{_fmt(a['cost_mm']):>8} {_fmt(a['time_s']):>8}")
        return "\n".join(lines)

    def write_metrics(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(METRIC_COLUMNS)
            for row in self.rows:
                w.writerow(["-" if row[c] is None else row[c] for c in METRIC_COLUMNS])


def parse_variants(selection):
    if selection in (None, "all"):
        return list(VARIANTS)
    names = [s.strip() for s in selection.split(",") if s.strip()] if isinstance(selection, str) else list(selection)
    bad = [v for v in names if v not in VARIANTS]
    if bad:
        raise ScenarioError(f"unknown variant {bad[0]!r}; choose from {', '.join(VARIANTS)}")
    return names


def run(scenario, variants="all", seeds=5, out=None):
    """Plan every (variant, seed) pair; writes metrics and dumps when ``out`` is given."""
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    report = RunReport(scenario.name)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
    for v in parse_variants(variants):
        for s in seeds:
            res = plan(v, scenario.start, scenario.goal, scenario.robot, scenario.scene, scenario.planner, s)
            log.info("%s %s seed %d: samples=%s time=%.1fs", scenario.name, v, s,
                     res.samples_before_path if res.success else "-", res.time_s)
            report.results.append(res)
            if out is not None:
                export_result(res, out)
    if out is not None:
        report.write_metrics(out / "metrics.csv")
    return report


# -- export -------------------------------------------------------------------


def _row(values):
    return " ".join(repr(float(v)) for v in values)


def dump_tree(result):
    """Text dump: one line per node with parent, chart, cost, x and tip."""
    lines = ["# node parent chart cost lam0..lam5 tau1 tau2 l tip_x tip_y tip_z"]
    for i, nd in enumerate(result.nodes):
        lines.append(f"{i} {nd.parent} {nd.chart} " + _row([nd.cost, *nd.point.x, *nd.point.cfg.tip]))
    return "\n".join(lines) + "\n"


def dump_path(result):
    lines = ["# node cost lam0..lam5 tau1 tau2 l tip_x tip_y tip_z"]
    for i in result.path:
        nd = result.nodes[i]
        lines.append(f"{i} " + _row([nd.cost, *nd.point.x, *nd.point.cfg.tip]))
    return "\n".join(lines) + "\n"


def dump_atlas(result):
    """Chart origins, selection counts, validity radius and neighbour ids."""
    atlas = result.atlas
    if atlas is None:
        return "# no atlas for this variant\n"
    lines = [f"# charts {len(atlas)} radius {atlas.radius!r} epsilon {atlas.epsilon!r}",
             "# chart count x0..x8 | neighbours"]
    for c in atlas.charts:
        nb = " ".join(str(j) for j in sorted(c.neighbors))
        lines.append(f"{c.id} {c.count} " + _row(c.x) + f" | {nb}")
    return "\n".join(lines) + "\n"


def dump_backbones(result):
    """Backbone polylines of the path nodes for plotting: node, s, x, y, z."""
    lines = ["# node s x y z"]
    for i in result.path:
        cfg = result.nodes[i].point.cfg
        for s, p in zip(cfg.s, cfg.p):
            lines.append(f"{i} " + _row([s, *p]))
    return "\n".join(lines) + "\n"


def export_result(result, out):
    out = Path(out)
    tag = f"{variant_slug(result.variant)}_{result.seed}"
    (out / f"path_{tag}.txt").write_text(dump_path(result))
    (out / f"tree_{tag}.txt").write_text(dump_tree(result))
    (out / f"atlas_{tag}.txt").write_text(dump_atlas(result))
    (out / f"backbone_{tag}.txt").write_text(dump_backbones(result))
