"""Object-pose feedback layered on a planned joint trajectory.

Only the thumb is corrected. Given the desired object pose for the next step
and the currently observed object-to-thumb transform, the thumb pose that
would put the object where the plan wants it is known; the thumb joints are
nudged along the Jacobian transpose of the pose error towards it, and every
other joint tracks the plan unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import pose_error_jacobian
from .kinematics import HandModel, fk_and_jacobian
from .transforms import Pose, invert_transform

__all__ = ["FeedbackConfig", "predicted_contact_pose", "feedback_command", "JACOBIAN_AT"]

JACOBIAN_AT = ("measured", "planned")


@dataclass(frozen=True)
class FeedbackConfig:
    """Feedback settings.

    ``orientation_scale`` converts radians of thumb orientation error into
    the metres of the position part. It is much smaller than the planner's
    ``w_or``: with the default gain, rotational error would otherwise be
    corrected about a hundred times too strongly in one step. Pose errors
    with norm below ``noise_floor`` (round-off of composing transforms) are
    treated as zero.
    """

    gain: float = 50.0
    orientation_scale: float = 0.05
    thumb: str = "thumb"
    jacobian_at: str = "measured"
    noise_floor: float = 1e-12

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError("gain must be non-negative")
        if self.orientation_scale < 0:
            raise ValueError("orientation_scale must be non-negative")
        if self.jacobian_at not in JACOBIAN_AT:
            raise ValueError(f"jacobian_at must be one of {JACOBIAN_AT}")


def predicted_contact_pose(X_next: Pose, object_to_thumb) -> Pose:
    """Thumb pose that places the object at ``X_next`` given the observed object-to-thumb transform."""
    T = object_to_thumb.matrix() if isinstance(object_to_thumb, Pose) else np.asarray(object_to_thumb)
    return Pose.from_matrix(X_next.matrix() @ T)


def feedback_command(theta_next, X_next: Pose, observed_object: Pose, object_to_thumb,
                     model: HandModel, cfg: FeedbackConfig = None, theta_measured=None):
    """Command for the next control step: the plan plus a thumb-only correction.

    Parameters
    ----------
    theta_next : (n_dof,) planned configuration for the next step.
    X_next : desired object pose for the next step (palm frame).
    observed_object : observed object pose (palm frame).
    object_to_thumb : observed transform of the thumb tip in the object frame.
        If ``None`` it is derived from ``observed_object`` and the thumb
        pose at ``theta_measured``.
    theta_measured : measured configuration, used for the Jacobian when
        ``cfg.jacobian_at == "measured"``; defaults to ``theta_next``.

    Returns
    -------
    (n_dof,) command, equal to ``theta_next`` outside the thumb and clamped to
    the joint limits.
    """
    cfg = cfg or FeedbackConfig()
    theta_next = np.asarray(theta_next, dtype=float)
    U = theta_next.copy()
    if cfg.gain == 0.0:
        return U
    sl = model.finger_slice(cfg.thumb)
    if object_to_thumb is None:
        if theta_measured is None:
            raise ValueError("object_to_thumb or theta_measured is required")
        T_meas = fk_and_jacobian(model, cfg.thumb, np.asarray(theta_measured, dtype=float))[0][0]
        object_to_thumb = invert_transform(observed_object.matrix()) @ T_meas
    T_ot = object_to_thumb.matrix() if isinstance(object_to_thumb, Pose) \
        else np.asarray(object_to_thumb, dtype=float)
    target = X_next.matrix() @ T_ot
    T_plan, J_plan = fk_and_jacobian(model, cfg.thumb, theta_next)
    if cfg.jacobian_at == "measured" and theta_measured is not None:
        _, J = fk_and_jacobian(model, cfg.thumb, np.asarray(theta_measured, dtype=float))
    else:
        J = J_plan
    e, De = pose_error_jacobian(T_plan, J, target[None], cfg.orientation_scale)
    if np.linalg.norm(e[0]) <= cfg.noise_floor:
        return U
    U[sl] = U[sl] - cfg.gain * (De[0].T @ e[0])
    return np.clip(U, model.lower, model.upper)
