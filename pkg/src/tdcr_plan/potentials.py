"""Elastic obstacles as smooth position-only potential fields.

Each obstacle contributes a quartic hinge

    U_i(p) = k/4 * (r_field - d_i(p))**4 / (r_field - r_solid)**2,  d_i < r_field

where ``d_i`` is the distance to the sphere centre or capsule axis. The
hinge vanishes with its first three derivatives at ``d = r_field``. The
body-frame wrench induced on a cross-section at pose g is
``W = [0; -R^T grad U(p)]``.

An optional tip field is linear in the tip position, ``U+(g) = -f . p``,
which models a constant world-frame tip force ``f``.
"""

from dataclasses import dataclass, field

import numpy as np

from tdcr_plan._kernels import CAPSULE, OBS_COLS, SPHERE


@dataclass(frozen=True)
class SphereField:
    center: tuple
    r_solid: float
    r_field: float
    k: float = 1e3

    def __post_init__(self):
        _check_radii(self.r_solid, self.r_field, self.k)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def row(self):
        return [SPHERE, *self.center, 0.0, 0.0, 0.0, self.r_solid, self.r_field, self.k]


@dataclass(frozen=True)
class CapsuleField:
    a: tuple
    b: tuple
    r_solid: float
    r_field: float
    k: float = 1e3

    def __post_init__(self):
        _check_radii(self.r_solid, self.r_field, self.k)
        object.__setattr__(self, "a", tuple(float(c) for c in self.a))
        object.__setattr__(self, "b", tuple(float(c) for c in self.b))
        if np.allclose(self.a, self.b):
            raise ValueError("capsule endpoints must differ")

    def row(self):
        return [CAPSULE, *self.a, *self.b, self.r_solid, self.r_field, self.k]


def _check_radii(r_solid, r_field, k):
    if not 0 < r_solid < r_field:
        raise ValueError(f"need 0 < r_solid < r_field, got {r_solid}, {r_field}")
    if k <= 0:
        raise ValueError(f"stiffness k must be positive, got {k}")


@dataclass(frozen=True)
class Scene:
    obstacles: tuple = ()
    tip_force: tuple = (0.0, 0.0, 0.0)
    table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "tip_force", tuple(float(f) for f in self.tip_force))
        rows = [ob.row() for ob in self.obstacles]
        table = np.array(rows, dtype=float).reshape(len(rows), OBS_COLS)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)


FREE_SPACE = Scene()


def _distances(ob, pts):
    if isinstance(ob, SphereField):
        diff = pts - np.asarray(ob.center)
    else:
        a = np.asarray(ob.a)
        ab = np.asarray(ob.b) - a
        t = np.clip((pts - a) @ ab / (ab @ ab), 0.0, 1.0)
        diff = pts - (a + t[:, None] * ab)
    return np.linalg.norm(diff, axis=1), diff


def potential(scene, p):
    """Field potential (J/m) at one point or an (m, 3) array of points."""
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    total = np.zeros(len(pts))
    for ob in scene.obstacles:
        d, _ = _distances(ob, pts)
        gap = np.clip(ob.r_field - d, 0.0, None)
        total += 0.25 * ob.k * gap**4 / (ob.r_field - ob.r_solid) ** 2
    return total if np.ndim(p) > 1 else float(total[0])


def potential_gradient(scene, p):
    """Analytic gradient of ``potential`` with respect to position."""
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    grad = np.zeros_like(pts)
    for ob in scene.obstacles:
        d, diff = _distances(ob, pts)
        gap = np.clip(ob.r_field - d, 0.0, None)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(d > 0, -ob.k * gap**3 / (ob.r_field - ob.r_solid) ** 2 / d, 0.0)
        grad += scale[:, None] * diff
    return grad if np.ndim(p) > 1 else grad[0]


def field_wrench(scene, g):
    """Body-frame wrench [moment; force] exerted by the field at pose g."""
    R, p = g[:3, :3], g[:3, 3]
    return np.concatenate([np.zeros(3), -R.T @ potential_gradient(scene, p)])


def tip_potential(scene, g):
    return -float(np.dot(scene.tip_force, g[:3, 3]))


def tip_wrench(scene, g):
    """Body-frame wrench of the linear tip field at pose g."""
    return np.concatenate([np.zeros(3), g[:3, :3].T @ np.asarray(scene.tip_force)])


def clearance(scene, pts):
    """Signed distance from each point to the nearest solid surface."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.full(len(pts), np.inf)
    for ob in scene.obstacles:
        d, _ = _distances(ob, pts)
        out = np.minimum(out, d - ob.r_solid)
    return out


def in_collision(scene, cfg, r_backbone):
    """True iff some backbone node is within r_solid + r_backbone of an obstacle."""
    if not scene.obstacles:
        return False
    return bool(np.any(clearance(scene, cfg.p) <= r_backbone))
