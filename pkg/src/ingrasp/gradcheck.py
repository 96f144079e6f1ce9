"""Finite-difference audit of the analytic cost gradients.

Each cost term is evaluated at seeded random configurations around the
bundled grasp and its analytic gradient is compared with central
differences. Per-step terms are checked coordinate by coordinate; the
whole-trajectory assemblies are checked through directional derivatives,
which keeps the audit fast while still covering every stacked block.

Samples that sit within ``BRANCH_MARGIN`` of an angle-wrapping cut (or of
the collision hinge kink) are redrawn, since the cost is not differentiable
there.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .costs import (
    JOINT_ACC,
    WAYPOINT_INTERP,
    CostWeights,
    GraspSpec,
    PlanProblem,
    _HandState,
    collision_cost,
    joint_acceleration_cost,
    object_pose_cost,
    relative_orientation_cost,
    relative_position_cost,
    total_cost,
)
from .geometry import Box, ConvexScene, Sphere, signed_distance
from .kinematics import direction_yaw_pitch
from .transforms import Pose, matrix_to_rpy, rotvec_to_matrix, wrap_angle

__all__ = ["TERMS", "TermAudit", "GradcheckReport", "audit_gradients", "relative_error"]

TERMS = (
    "object_pose",
    "relative_position",
    "relative_orientation",
    "joint_acceleration",
    "collision",
    "total_waypoint",
    "total_joint_acc",
    "total_scene",
)
BRANCH_MARGIN = 1e-3
CONFIG_SPREAD = 0.3
N_DIRECTIONS = 3


@dataclass(frozen=True)
class TermAudit:
    term: str
    samples: int
    max_error: float
    worst_seed: int
    passed: bool


@dataclass(frozen=True)
class GradcheckReport:
    audits: tuple
    tolerance: float
    seed: int
    wall_time: float

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.audits)

    @property
    def failures(self) -> list:
        return [a for a in self.audits if not a.passed]

    def table(self) -> str:
        lines = [f"{'term':<22}{'samples':>8}{'max_rel_error':>16}{'worst_seed':>12}  status"]
        for a in self.audits:
            lines.append(f"{a.term:<22}{a.samples:>8}{a.max_error:>16.3e}{a.worst_seed:>12}  "
                         + ("ok" if a.passed else "FAIL"))
        return "\n".join(lines)


def relative_error(g, g_ref) -> float:
    """``|g - g_ref| / max(|g_ref|, |g|)`` with a tiny floor; zero when both vanish."""
    g = np.asarray(g, dtype=float)
    g_ref = np.asarray(g_ref, dtype=float)
    scale = max(np.linalg.norm(g_ref), np.linalg.norm(g))
    if scale < 1e-300:
        return 0.0
    return float(np.linalg.norm(g - g_ref) / scale)


def _central_gradient(f, x, step):
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    flat = x.ravel()
    for i in range(x.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * step)
    return g.reshape(x.shape)


def _coordinate_error(fg, x, step):
    _, g = fg(x)
    return relative_error(g, _central_gradient(lambda y: fg(y)[0], x, step))


def _directional_error(fg, x, step, rng):
    """Largest relative mismatch of ``g . v`` against central differences along ``v``.

    Directions lean on the gradient so the reference derivative is never tiny.
    """
    _, g = fg(x)
    gn = np.linalg.norm(g)
    worst = 0.0
    for _ in range(N_DIRECTIONS):
        r = rng.normal(size=x.shape)
        v = 0.5 * r / np.linalg.norm(r)
        if gn > 0:
            v = v + g / gn
        fd = (fg(x + step * v)[0] - fg(x - step * v)[0]) / (2.0 * step)
        worst = max(worst, relative_error(np.sum(g * v), fd))
    return worst


# ------------------------------------------------------------------ sampling


def _random_config(grasp: GraspSpec, rng):
    hand = grasp.hand
    q = grasp.theta0 + rng.uniform(-CONFIG_SPREAD, CONFIG_SPREAD, hand.dof)
    return np.clip(q, hand.lower, hand.upper)


def _random_pose_near(pose: Pose, rng, pos=0.02, rot=0.3):
    T = pose.matrix()
    R = rotvec_to_matrix(rng.normal(0.0, rot, 3)) @ T[:3, :3]
    return Pose.from_matrix(np.block([[R, (T[:3, 3] + rng.normal(0.0, pos, 3))[:, None]],
                                      [np.zeros((1, 3)), np.ones((1, 1))]]))


def _near_rpy_cut(rpy) -> bool:
    rpy = np.asarray(rpy)
    return bool(np.any(np.abs(rpy[..., [0, 2]]) > np.pi - BRANCH_MARGIN)
                or np.any(np.abs(rpy[..., 1]) > np.pi / 2 - BRANCH_MARGIN))


def _object_pose_ok(grasp, q, target):
    T = _HandState(grasp, q).T_thumb[0]
    Tb = grasp.thumb_target(target)
    return not _near_rpy_cut(matrix_to_rpy(Tb[:3, :3].T @ T[:3, :3]))


def _directions_ok(grasp, Q):
    state = _HandState(grasp, Q)
    for idx in range(len(grasp.grasp_fingers)):
        r = state.relative(idx)[1]
        h = np.hypot(r[:, 0], r[:, 1])
        if np.any(h < BRANCH_MARGIN * np.linalg.norm(r, axis=1)):
            return False
        diff = wrap_angle(direction_yaw_pitch(r) - grasp.rel_rpy[idx])
        if np.any(np.abs(diff) > np.pi - BRANCH_MARGIN):
            return False
    return True


def _place_obstacle(piece, obstacle_shape, center, u, target_sd):
    """Slide ``obstacle_shape`` along ``u`` from ``center`` until its signed distance is ``target_sd``."""
    def sd(d):
        T = obstacle_shape.pose.copy()
        T[:3, 3] = center + d * u
        return signed_distance(piece, Box(obstacle_shape.half_extents, T))

    lo, hi = 0.0, 0.2
    for _ in range(45):
        mid = 0.5 * (lo + hi)
        if sd(mid) < target_sd:
            lo = mid
        else:
            hi = mid
    T = obstacle_shape.pose.copy()
    T[:3, 3] = center + 0.5 * (lo + hi) * u
    return Box(obstacle_shape.half_extents, T)


def _random_scene(grasp, q, rng, radius, beta):
    T_obj = grasp.object_transform(q)
    piece = Sphere(radius)
    placed = piece.placed(T_obj)
    R = rotvec_to_matrix(rng.uniform(-np.pi, np.pi, 3))
    T = np.eye(4)
    T[:3, :3] = R
    box = Box(rng.uniform(0.003, 0.012, 3), T)
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    target = rng.uniform(-radius - 0.003, beta - 2e-4)
    obstacle = _place_obstacle(placed, box, placed.center, u, target)
    return ConvexScene([piece], [obstacle])


def _hinge_clear(grasp, scene, Q, beta):
    """True when every step is safely away from the hinge kink."""
    for q in np.atleast_2d(Q):
        T_obj = grasp.object_transform(q)
        for obstacle in scene.obstacles:
            sd = min(signed_distance(p.placed(T_obj), obstacle) for p in scene.object_pieces)
            if abs(sd - beta) < 1e-4:
                return False
    return True


# ------------------------------------------------------------------ audits


def _draw(make, ok, rng, tries=50):
    for _ in range(tries):
        inst = make(rng)
        if ok(inst):
            return inst
    raise RuntimeError("could not draw a sample away from the non-smooth set")


def _term_sampler(term, grasp, weights, scene_radius, goal_pool, T):
    """Sampler pieces for one term: ``make(rng)``, ``ok(instance)``, ``build(instance)``, check kind."""
    beta = weights.beta

    if term == "object_pose":
        def make(rng):
            return _random_config(grasp, rng), _random_pose_near(grasp.object_pose, rng)
        ok = lambda inst: _object_pose_ok(grasp, *inst)
        build = lambda inst: (inst[0], lambda q: object_pose_cost(q, inst[1], grasp, weights.w_or))
        return make, ok, build, "coordinate"
    if term == "relative_position":
        make = lambda rng: _random_config(grasp, rng)
        return make, lambda q: True, lambda q: (q, lambda x: relative_position_cost(x, grasp)), \
            "coordinate"
    if term == "relative_orientation":
        def make(rng):
            return _random_config(grasp, rng), rng.uniform(0.2, 1.0, 3)
        ok = lambda inst: _directions_ok(grasp, inst[0])
        build = lambda inst: (inst[0], lambda x: relative_orientation_cost(x, grasp, inst[1]))
        return make, ok, build, "coordinate"
    if term == "joint_acceleration":
        def make(rng):
            return rng.normal(size=(T + 1, grasp.hand.dof)), rng.uniform(0.001, 1.0)
        build = lambda inst: (inst[0], lambda x: joint_acceleration_cost(x, inst[1]))
        return make, lambda inst: True, build, "coordinate"
    if term == "collision":
        def make(rng):
            q = _random_config(grasp, rng)
            return q, _random_scene(grasp, q, rng, scene_radius, beta)
        ok = lambda inst: _hinge_clear(grasp, inst[1], inst[0], beta)
        build = lambda inst: (inst[0], lambda x: collision_cost(x, grasp, inst[1],
                                                                 weights.alpha2, beta))
        return make, ok, build, "coordinate"

    mode = JOINT_ACC if term == "total_joint_acc" else WAYPOINT_INTERP

    def make(rng):
        Q = np.stack([_random_config(grasp, rng) for _ in range(T + 1)])
        Q[0] = grasp.theta0
        goal = goal_pool[rng.integers(len(goal_pool))] if goal_pool else \
            _random_pose_near(grasp.object_pose, rng)
        scene = None
        if term == "total_scene":
            scene = _random_scene(grasp, Q[T // 2], rng, scene_radius, beta)
        return Q, PlanProblem(grasp, goal, weights, mode, scene, T)

    def ok(inst):
        Q, problem = inst
        if not _directions_ok(grasp, Q):
            return False
        for t, q in enumerate(Q):
            Tb = problem.thumb_targets[t]
            Ta = _HandState(grasp, q).T_thumb[0]
            if _near_rpy_cut(matrix_to_rpy(Tb[:3, :3].T @ Ta[:3, :3])):
                return False
        return problem.scene is None or _hinge_clear(grasp, problem.scene, Q, beta)

    build = lambda inst: (inst[0], lambda x: total_cost(x, inst[1]))
    return make, ok, build, "directional"


def _corrupted(fg, scale):
    def wrapped(x):
        v, g = fg(x)
        return v, np.asarray(g) * scale
    return wrapped


def audit_gradients(grasp: GraspSpec = None, n_samples: int = 100, seed: int = 0,
                    tol: float = 1e-5, step: float = 1e-6, terms=None,
                    corrupt: Optional[str] = None, corrupt_scale: float = 1.001,
                    weights: CostWeights = None, goals=None, scene_radius: float = 0.008,
                    T: int = 10) -> GradcheckReport:
    """Run the audit for each requested term.

    Parameters
    ----------
    grasp : defaults to the bundled fixture grasp.
    n_samples : random instances per term; instance ``i`` of a term is drawn
        from ``default_rng([seed, term_index, i])`` so it can be reproduced alone.
    corrupt : name of a term whose analytic gradient is scaled by
        ``corrupt_scale`` before comparison (fault injection for tests).
    goals : optional goal poses for the assembled objectives; random poses
        near the initial object pose otherwise.
    """
    if grasp is None:
        from .fixtures import load_fixture_grasp
        grasp = load_fixture_grasp()
    weights = weights or CostWeights()
    terms = tuple(TERMS if terms is None else terms)
    for t in terms + ((corrupt,) if corrupt else ()):
        if t not in TERMS:
            raise ValueError(f"unknown cost term {t!r}; choose from {TERMS}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    goal_pool = list(goals) if goals else []
    start = time.perf_counter()
    audits = []
    for term in terms:
        make, ok, build, kind = _term_sampler(term, grasp, weights, scene_radius, goal_pool, T)
        k = TERMS.index(term)
        worst, worst_seed = 0.0, 0
        for i in range(n_samples):
            rng = np.random.default_rng([seed, k, i])
            x, fg = build(_draw(make, ok, rng))
            if term == corrupt:
                fg = _corrupted(fg, corrupt_scale)
            if kind == "coordinate":
                err = _coordinate_error(fg, x, step)
            else:
                err = _directional_error(fg, x, step, rng)
            if err > worst or i == 0:
                worst, worst_seed = err, i
        audits.append(TermAudit(term, n_samples, worst, worst_seed, bool(worst < tol)))
    return GradcheckReport(tuple(audits), tol, seed, time.perf_counter() - start)
