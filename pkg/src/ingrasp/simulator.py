"""Kinematic execution of a plan under disturbances, and the evaluation metrics.

The hand follows its commands through a first-order lag with additive joint
noise, and the object slips in the grasp: the thumb-to-object transform
takes a small random step at every control step. Everything is kinematic;
there is no contact model.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .costs import GraspSpec
from .feedback import FeedbackConfig, feedback_command
from .kinematics import fk_transform
from .planner import PlanResult, orientation_error_pct, predicted_object_path
from .transforms import Pose, invert_transform, rotvec_to_matrix

__all__ = [
    "DisturbanceModel",
    "ExecutionTrace",
    "Metrics",
    "simulate",
    "compute_metrics",
    "trace_to_table",
    "metrics_to_dict",
]


@dataclass(frozen=True)
class DisturbanceModel:
    """Per-control-step disturbances.

    lag : weight of the previous realised configuration, in ``[0, 1)``.
    joint_noise : std of additive joint noise (rad).
    slip_position, slip_rotation : std per axis of the random step applied
        to the thumb-to-object transform (m, rad).
    observation_position, observation_rotation : std of noise on the
        observed object pose handed to the feedback controller (m, rad).
    """

    lag: float = 0.3
    joint_noise: float = 0.002
    slip_position: float = 0.0005
    slip_rotation: float = 0.005
    observation_position: float = 0.0
    observation_rotation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lag < 1.0:
            raise ValueError("lag must lie in [0, 1)")
        for name in ("joint_noise", "slip_position", "slip_rotation",
                     "observation_position", "observation_rotation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def none(cls, seed: int = 0) -> "DisturbanceModel":
        return cls(lag=0.0, joint_noise=0.0, slip_position=0.0, slip_rotation=0.0, seed=seed)


@dataclass
class ExecutionTrace:
    commanded: np.ndarray
    realized: np.ndarray
    object_poses: list
    dt: float
    dropped: bool = False

    def __post_init__(self):
        if not (len(self.commanded) == len(self.realized) == len(self.object_poses)):
            raise ValueError("trace streams must have equal lengths")
        if not len(self.commanded):
            raise ValueError("trace is empty")

    def __len__(self):
        return len(self.commanded)

    @property
    def final_pose(self) -> Pose:
        return self.object_poses[-1]


@dataclass(frozen=True)
class Metrics:
    position_error_cm: float
    position_error_pct: Optional[float]
    orientation_error_pct: float


def _random_transform(rng, pos_std, rot_std):
    T = np.eye(4)
    T[:3, :3] = rotvec_to_matrix(rng.normal(0.0, rot_std, 3))
    T[:3, 3] = rng.normal(0.0, pos_std, 3)
    return T


def simulate(plan: PlanResult, grasp: GraspSpec, disturbance: DisturbanceModel = None,
             feedback: FeedbackConfig = None) -> ExecutionTrace:
    """Execute the plan's dense trajectory, one control step per dense step.

    Step 0 starts at rest in the initial grasp. With ``feedback`` the command
    for each later step comes from :func:`feedback_command`, fed with the
    realised state of the previous step; otherwise it is the plan itself.
    Realised configurations are kept within the joint limits.
    """
    dist = disturbance or DisturbanceModel()
    hand = grasp.hand
    if plan.dense.n_dof != hand.dof:
        raise ValueError(f"plan has {plan.dense.n_dof} dof, hand has {hand.dof}")
    rng = np.random.default_rng(dist.seed)
    planned = plan.dense.steps
    desired = plan.object_path
    K, n = planned.shape
    commanded = np.empty((K, n))
    realized = np.empty((K, n))
    commanded[0] = realized[0] = planned[0]
    attach = grasp.thumb_to_object.copy()
    T_thumb = fk_transform(hand, grasp.thumb, realized[0])
    poses = [Pose.from_matrix(T_thumb @ attach)]
    fb_cfg = None if feedback is None else replace(feedback, thumb=grasp.thumb)
    for t in range(1, K):
        if fb_cfg is None:
            commanded[t] = planned[t]
        else:
            observed = T_thumb @ attach
            if dist.observation_position > 0 or dist.observation_rotation > 0:
                observed = observed @ _random_transform(rng, dist.observation_position,
                                                        dist.observation_rotation)
            object_to_thumb = invert_transform(observed) @ T_thumb
            commanded[t] = feedback_command(planned[t], desired[t], Pose.from_matrix(observed),
                                            object_to_thumb, hand, fb_cfg,
                                            theta_measured=realized[t - 1])
        q = dist.lag * realized[t - 1] + (1.0 - dist.lag) * commanded[t]
        if dist.joint_noise > 0:
            q = q + rng.normal(0.0, dist.joint_noise, n)
        realized[t] = np.clip(q, hand.lower, hand.upper)
        if dist.slip_position > 0 or dist.slip_rotation > 0:
            attach = _random_transform(rng, dist.slip_position, dist.slip_rotation) @ attach
        T_thumb = fk_transform(hand, grasp.thumb, realized[t])
        poses.append(Pose.from_matrix(T_thumb @ attach))
    return ExecutionTrace(commanded, realized, poses, plan.dense.dt)


def compute_metrics(trace: ExecutionTrace, X0: Pose, goal: Pose) -> Metrics:
    """Final-pose errors: position in cm and as a percentage of the start-goal distance.

    The percentage is ``None`` when start and goal coincide (within 1e-9 m).
    """
    reached = trace.final_pose
    err = float(np.linalg.norm(reached.position - goal.position))
    span = float(np.linalg.norm(X0.position - goal.position))
    pct = 100.0 * err / span if span >= 1e-9 else None
    return Metrics(100.0 * err, pct, orientation_error_pct(goal.orientation, reached.orientation))


def noiseless_matches_prediction(plan: PlanResult, grasp: GraspSpec, trace: ExecutionTrace):
    """Largest deviation between a trace's object poses and the plan's prediction (matrices)."""
    pred = predicted_object_path(plan.dense, grasp)
    return max(float(np.abs(a.matrix() - b.matrix()).max())
               for a, b in zip(pred, trace.object_poses))


def trace_to_table(trace: ExecutionTrace) -> str:
    """Whitespace-separated table: step, time, commanded joints, realised joints, object pose."""
    n = trace.commanded.shape[1]
    head = (["step", "time"] + [f"cmd_{j}" for j in range(n)] + [f"real_{j}" for j in range(n)]
            + ["obj_x", "obj_y", "obj_z", "obj_qw", "obj_qx", "obj_qy", "obj_qz"])
    buf = io.StringIO()
    buf.write(" ".join(head) + "\n")
    for k in range(len(trace)):
        p = trace.object_poses[k]
        row = np.concatenate([trace.commanded[k], trace.realized[k], p.position, p.orientation])
        buf.write(f"{k} {k * trace.dt:.6f} " + " ".join(f"{v:.10f}" for v in row) + "\n")
    return buf.getvalue()


def metrics_to_dict(metrics: Metrics) -> dict:
    return asdict(metrics)


def metrics_to_json(metrics: Metrics, extra: dict = None) -> str:
    doc = {"metrics": metrics_to_dict(metrics)}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)
