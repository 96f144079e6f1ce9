"""In-grasp trajectory planning: problem assembly, solve, densify, predict."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .costs import (
    JOINT_ACC,
    MODES,
    WAYPOINT_INTERP,
    CostWeights,
    GraspSpec,
    PlanProblem,
    collision_residuals,
    gauss_newton_hessian,
    smooth_cost,
)
from .errors import ModelError
from .geometry import ConvexScene, place_pieces, scene_min_signed_distance
from .kinematics import HandModel, load_hand_model
from .optimizer import SolveReport, SolverConfig, Trajectory, solve, velocity_residuals
from .transforms import Pose

__all__ = [
    "PlannerConfig",
    "PlanResult",
    "plan",
    "upsample",
    "predicted_object_path",
    "orientation_error_pct",
    "load_grasp_spec",
    "grasp_spec_to_dict",
    "plan_to_dict",
    "WAYPOINT_INTERP",
    "JOINT_ACC",
]


@dataclass(frozen=True)
class PlannerConfig:
    T: int = 10
    dt: float = 0.167
    v_max: float = 0.6
    weights: CostWeights = field(default_factory=CostWeights)
    mode: str = WAYPOINT_INTERP
    scene: Optional[ConvexScene] = None
    resolution: int = 100
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be at least 2")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.resolution < self.T + 1:
            raise ValueError("resolution must be at least T + 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "dt": self.dt,
            "v_max": self.v_max,
            "weights": asdict(self.weights),
            "mode": self.mode,
            "scene": self.scene is not None,
            "resolution": self.resolution,
            "solver": asdict(self.solver),
        }


@dataclass
class PlanResult:
    coarse: Trajectory
    dense: Trajectory
    object_path: list
    report: SolveReport
    position_error: float
    orientation_error: float
    collision_audit_failed: bool = False
    min_scene_distance: Optional[float] = None

    @property
    def final_object_pose(self) -> Pose:
        return self.object_path[-1]


def orientation_error_pct(q_desired, q) -> float:
    """Quaternion orientation error in percent of its maximum, sqrt(2)."""
    q_desired = np.asarray(q_desired, dtype=float)
    q = np.asarray(q, dtype=float)
    d = min(np.linalg.norm(q_desired - q), np.linalg.norm(q_desired + q))
    return float(100.0 * d / np.sqrt(2.0))


def upsample(traj: Trajectory, resolution: int) -> Trajectory:
    """Piecewise-linear resampling of a trajectory onto ``resolution`` steps."""
    T = traj.T
    if resolution < T + 1:
        raise ValueError("resolution must be at least T + 1")
    k = np.arange(resolution)
    pos = k * T / (resolution - 1)
    i = np.minimum(np.floor(pos).astype(int), T - 1)
    frac = (pos - i)[:, None]
    steps = (1.0 - frac) * traj.steps[i] + frac * traj.steps[i + 1]
    return Trajectory(steps, traj.duration / (resolution - 1))


def predicted_object_path(traj, grasp: GraspSpec) -> list:
    """Object pose at each step assuming it stays rigidly attached to the thumb tip."""
    steps = traj.steps if isinstance(traj, Trajectory) else np.atleast_2d(traj)
    return [Pose.from_matrix(T) for T in grasp.object_transform(steps)]


def plan(grasp: GraspSpec, goal: Pose, config: PlannerConfig = None) -> PlanResult:
    """Plan a joint trajectory moving the grasped object from its initial pose to ``goal``.

    Both poses are in the palm frame. The solver starts from the grasp held
    still, so an unreachable goal degrades into a best-effort plan rather
    than an error.
    """
    cfg = config or PlannerConfig()
    problem = PlanProblem(grasp, goal, cfg.weights, cfg.mode, cfg.scene, cfg.T)
    hand = grasp.hand
    initial = Trajectory(np.tile(grasp.theta0, (cfg.T + 1, 1)), cfg.dt)
    penalty = None
    if cfg.scene is not None:
        penalty = _collision_penalty(problem)
    coarse, report = solve(initial, lambda s: smooth_cost(s, problem),
                           hand.lower, hand.upper, cfg.v_max, cfg.solver,
                           hessian=lambda s: gauss_newton_hessian(s, problem),
                           penalty=penalty, penalty_weight=cfg.weights.alpha2)
    dense = upsample(coarse, cfg.resolution)
    path = predicted_object_path(dense, grasp)
    final = path[-1]
    result = PlanResult(
        coarse=coarse,
        dense=dense,
        object_path=path,
        report=report,
        position_error=float(np.linalg.norm(final.position - goal.position)),
        orientation_error=orientation_error_pct(goal.orientation, final.orientation),
    )
    if cfg.scene is not None:
        result.min_scene_distance = min(min(scene_min_signed_distance(cfg.scene, T))
                                        for T in grasp.object_transform(dense.steps))
        result.collision_audit_failed = result.min_scene_distance < 0.0
    return result


def _collision_penalty(problem: PlanProblem):
    """Collision hinge rows, one per (step, obstacle), in the solver's penalty layout."""
    n_obs = len(problem.scene.obstacles)

    def penalty(steps):
        h, dh = collision_residuals(steps, problem.grasp, problem.scene, problem.weights.beta)
        n_steps, n = steps.shape
        jac = np.zeros((n_steps, n_obs, n_steps, n))
        jac[np.arange(n_steps), :, np.arange(n_steps), :] = dh
        return h.ravel(), jac.reshape(n_steps * n_obs, n_steps, n)

    return penalty


def audit_feasibility(result: PlanResult, hand: HandModel, v_max: float) -> dict:
    """Re-check joint limits and velocity bounds on the coarse trajectory."""
    s = result.coarse.steps
    return {
        "limit_violation": float(max(np.max(hand.lower - s, initial=0.0),
                                     np.max(s - hand.upper, initial=0.0), 0.0)),
        "velocity_violation": float(velocity_residuals(result.coarse, v_max).max(initial=0.0)),
    }


# ------------------------------------------------------------------ documents


def load_grasp_spec(source, hand: HandModel = None) -> GraspSpec:
    """Read a grasp-spec JSON document.

    ``hand_model`` is resolved relative to the grasp file; an explicit ``hand``
    argument takes precedence over it.
    """
    base = None
    if isinstance(source, dict):
        doc = source
    else:
        path = Path(source)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ModelError(f"cannot read grasp spec {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ModelError(f"grasp spec {path} is not valid JSON: {exc}") from None
        base = path.parent
    if not isinstance(doc, dict):
        raise ModelError("grasp spec must be a mapping")
    if hand is None:
        if "hand_model" not in doc:
            raise ModelError("grasp spec missing field 'hand_model'")
        hp = Path(doc["hand_model"])
        if base is not None and not hp.is_absolute():
            hp = base / hp
        hand = load_hand_model(hp)
    for key in ("theta0", "thumb", "object_pose_xyz", "object_pose_rpy"):
        if key not in doc:
            raise ModelError(f"grasp spec missing field {key!r}")
    try:
        theta0 = np.array(doc["theta0"], dtype=float)
    except (TypeError, ValueError):
        raise ModelError("grasp spec field 'theta0' must be a list of numbers") from None
    if theta0.shape != (hand.dof,):
        raise ModelError(f"grasp spec field 'theta0' has {theta0.size} entries, "
                         f"hand has {hand.dof} dof")
    try:
        pose = Pose.from_xyz_rpy(np.array(doc["object_pose_xyz"], dtype=float).reshape(3),
                                 np.array(doc["object_pose_rpy"], dtype=float).reshape(3))
    except (TypeError, ValueError):
        raise ModelError("grasp spec fields 'object_pose_xyz'/'object_pose_rpy' must be "
                         "3-vectors") from None
    try:
        return GraspSpec(hand, theta0, doc["thumb"], pose, doc.get("grasp_fingers"))
    except KeyError as exc:
        raise ModelError(f"grasp spec field 'thumb'/'grasp_fingers': {exc.args[0]}") from None
    except ValueError as exc:
        raise ModelError(f"grasp spec: {exc}") from None


def grasp_spec_to_dict(grasp: GraspSpec, hand_model_path: str = "") -> dict:
    return {
        "hand_model": str(hand_model_path),
        "theta0": grasp.theta0.tolist(),
        "thumb": grasp.thumb,
        "grasp_fingers": list(grasp.grasp_fingers),
        "object_pose_xyz": grasp.object_pose.position.tolist(),
        "object_pose_rpy": grasp.object_pose.rpy.tolist(),
    }


def plan_to_dict(result: PlanResult, config: PlannerConfig, goal: Pose, extra=None) -> dict:
    doc = {
        "coarse": {"dt": result.coarse.dt, "steps": result.coarse.steps.tolist()},
        "dense": {"dt": result.dense.dt, "steps": result.dense.steps.tolist()},
        "object_path": [p.to_dict() for p in result.object_path],
        "report": result.report.to_dict(),
        "goal": goal.to_dict(),
        "predicted_position_error": result.position_error,
        "predicted_orientation_error_pct": result.orientation_error,
        "collision_audit_failed": result.collision_audit_failed,
        "min_scene_distance": result.min_scene_distance,
        "config": config.to_dict(),
    }
    if extra:
        doc.update(extra)
    return doc
