"""Cost terms of the in-grasp trajectory objective and their analytic gradients.

Each public term takes a single joint configuration and returns
``(value, gradient)`` with the gradient over the full hand configuration.
:func:`total_cost` evaluates the whole objective on a ``(T+1, n_dof)``
trajectory, batching the kinematics across time steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import ConvexScene, distance_query
from .errors import DegenerateDirectionError
from .kinematics import (
    HandModel,
    direction_yaw_pitch,
    fk_and_jacobian,
    fk_transform,
    relative_position,
)
from .transforms import (
    Pose,
    invert_transform,
    matrix_to_rpy,
    quat_slerp,
    rpy_rate_inverse,
    wrap_angle,
)

WAYPOINT_INTERP = "waypoint-interp"
JOINT_ACC = "joint-acc"
MODES = (WAYPOINT_INTERP, JOINT_ACC)


@dataclass(frozen=True)
class CostWeights:
    """Scalar weights of the objective.

    ``w_or`` converts radians of orientation error into the metres used for
    the position part when poses are differenced.
    """

    k1: float = 0.09
    k2: float = 100.0
    k3: float = 1.0
    psi: tuple = (0.0, 1.0, 0.0)
    alpha1: float = 0.01
    alpha2: float = 1000.0
    beta: float = 0.005
    w_or: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "psi", tuple(float(x) for x in self.psi))
        if len(self.psi) != 3:
            raise ValueError("psi must have three components")
        for name in ("k1", "k2", "k3", "alpha1", "alpha2", "w_or"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be non-negative")
        if min(self.psi) < 0:
            raise ValueError("psi must be non-negative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


class GraspSpec:
    """An initial grasp and the quantities derived from it.

    The object is rigidly attached to the thumb tip: ``thumb_to_object`` is the
    object pose in the thumb-tip frame at ``theta0``. The other fingers are
    tied to the thumb through their initial tip positions (``rel_positions``,
    thumb frame) and the direction angles of the thumb-to-finger vector
    (``rel_rpy``).
    """

    def __init__(self, hand: HandModel, theta0, thumb: str, object_pose: Pose,
                 grasp_fingers=None):
        self.hand = hand
        self.theta0 = np.array(theta0, dtype=float)
        if self.theta0.shape != (hand.dof,):
            raise ValueError(f"theta0 has {self.theta0.size} entries, hand has {hand.dof} dof")
        hand.finger_slice(thumb)
        self.thumb = thumb
        if grasp_fingers is None:
            grasp_fingers = [f for f in hand.finger_names if f != thumb]
        self.grasp_fingers = list(grasp_fingers)
        for f in self.grasp_fingers:
            hand.finger_slice(f)
            if f == thumb:
                raise ValueError("the thumb cannot also be a grasp finger")
        self.object_pose = object_pose
        T_thumb = fk_transform(hand, thumb, self.theta0)
        self.thumb_to_object = invert_transform(T_thumb) @ object_pose.matrix()
        self.object_to_thumb = invert_transform(self.thumb_to_object)
        self.rel_positions = np.array(
            [relative_position(hand, thumb, f, self.theta0) for f in self.grasp_fingers]
        ).reshape(-1, 3)
        self.rel_rpy = direction_yaw_pitch(self.rel_positions).reshape(-1, 3)

    def __repr__(self):
        return (f"GraspSpec(hand={self.hand.name!r}, thumb={self.thumb!r}, "
                f"fingers={self.grasp_fingers})")

    def object_transform(self, q) -> np.ndarray:
        """Object transform(s) implied by rigid thumb attachment."""
        return fk_transform(self.hand, self.thumb, q) @ self.thumb_to_object

    def thumb_target(self, object_pose: Pose) -> np.ndarray:
        """Thumb-tip transform that places the object at ``object_pose``."""
        return object_pose.matrix() @ self.object_to_thumb


@dataclass
class PlanProblem:
    """Everything :func:`total_cost` needs besides the trajectory itself."""

    grasp: GraspSpec
    goal: Pose
    weights: CostWeights = field(default_factory=CostWeights)
    mode: str = WAYPOINT_INTERP
    scene: Optional[ConvexScene] = None
    T: int = 10

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.T < 2:
            raise ValueError("T must be at least 2")
        targets = [self.grasp.object_pose]
        targets += waypoint_schedule(self.grasp.object_pose, self.goal, self.T)
        targets.append(self.goal)
        self.object_targets = targets
        self.thumb_targets = np.stack([self.grasp.thumb_target(p) for p in targets])
        w = np.full(self.T + 1, self.weights.k1 if self.mode == WAYPOINT_INTERP else 0.0)
        w[-1] = 1.0
        self.pose_weights = w


# ------------------------------------------------------------------ helpers


def pose_difference(a: Pose, b: Pose, w_or: float = 1.0) -> np.ndarray:
    """Position difference ``a - b`` and scaled wrapped RPY of ``b^-1 a``."""
    Ta = a.matrix() if isinstance(a, Pose) else np.asarray(a)
    Tb = b.matrix() if isinstance(b, Pose) else np.asarray(b)
    return _pose_error(Ta[None], Tb[None], w_or)[0]


def _pose_error(Ta, Tb, w_or):
    Rrel = np.swapaxes(Tb[..., :3, :3], -1, -2) @ Ta[..., :3, :3]
    return np.concatenate([Ta[..., :3, 3] - Tb[..., :3, 3], w_or * matrix_to_rpy(Rrel)], axis=-1)


def pose_error_jacobian(Ta, Ja, Tb, w_or):
    """Pose error ``(B, 6)`` of ``Ta`` against ``Tb`` and its derivative.

    ``Ja`` is the geometric Jacobian ``(B, 6, k)`` of frame ``Ta``; the result
    ``(B, 6, k)`` differentiates :func:`pose_difference` with ``Tb`` fixed.
    """
    RbT = np.swapaxes(Tb[..., :3, :3], -1, -2)
    rpy = matrix_to_rpy(RbT @ Ta[..., :3, :3])
    e = np.concatenate([Ta[..., :3, 3] - Tb[..., :3, 3], w_or * rpy], axis=-1)
    Einv = rpy_rate_inverse(rpy)
    De = np.concatenate([Ja[..., :3, :], w_or * (Einv @ RbT @ Ja[..., 3:, :])], axis=-2)
    return e, De


class _HandState:
    """Batched kinematics of the thumb and grasp fingers at configurations ``Q``."""

    def __init__(self, grasp: GraspSpec, Q):
        hand = grasp.hand
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.thumb_slice = hand.finger_slice(grasp.thumb)
        self.T_thumb, self.J_thumb = fk_and_jacobian(hand, grasp.thumb, self.Q)
        self.fingers = []
        for f in grasp.grasp_fingers:
            T, J = fk_and_jacobian(hand, f, self.Q)
            self.fingers.append((hand.finger_slice(f), T[:, :3, 3], J[:, :3, :]))

    def relative(self, idx):
        """Relative position of grasp finger ``idx`` in the thumb frame and its Jacobians."""
        sl, p, Jv = self.fingers[idx]
        Rt = self.T_thumb[:, :3, :3]
        RtT = np.swapaxes(Rt, 1, 2)
        d = p - self.T_thumb[:, :3, 3]
        r = np.einsum("bij,bj->bi", RtT, d)
        Jt = self.J_thumb
        # moving the thumb joint j: dr = -R^T (omega_j x d + v_j)
        cross = np.cross(np.swapaxes(Jt[:, 3:, :], 1, 2), d[:, None, :])
        dr_thumb = -RtT @ (np.swapaxes(cross, 1, 2) + Jt[:, :3, :])
        dr_finger = RtT @ Jv
        return sl, r, dr_thumb, dr_finger


def _rpy_of_direction_jacobian(r):
    """Derivative of (roll, pitch, yaw) of a direction ``r`` w.r.t. ``r`` -> ``(B, 3, 3)``."""
    x, y, z = r[:, 0], r[:, 1], r[:, 2]
    h2 = x * x + y * y
    h = np.sqrt(h2)
    n2 = h2 + z * z
    D = np.zeros((len(r), 3, 3))
    D[:, 1, 0] = z * x / (h * n2)
    D[:, 1, 1] = z * y / (h * n2)
    D[:, 1, 2] = -h / n2
    D[:, 2, 0] = -y / h2
    D[:, 2, 1] = x / h2
    return D


# ------------------------------------------------------------------ terms


def _object_terms(state: _HandState, targets, weights, w_or):
    """Weighted sum over the batch of squared thumb pose errors."""
    e, De = pose_error_jacobian(state.T_thumb, state.J_thumb, targets, w_or)
    values = np.einsum("bi,bi->b", e, e)
    grad = np.zeros_like(state.Q)
    grad[:, state.thumb_slice] = 2.0 * weights[:, None] * np.einsum("bik,bi->bk", De, e)
    return float(np.dot(weights, values)), grad, values


def _relative_position_terms(state: _HandState, grasp: GraspSpec):
    values = np.zeros(len(state.Q))
    grad = np.zeros_like(state.Q)
    for idx in range(len(grasp.grasp_fingers)):
        sl, r, dr_t, dr_f = state.relative(idx)
        res = r - grasp.rel_positions[idx]
        values += np.einsum("bi,bi->b", res, res)
        grad[:, state.thumb_slice] += 2.0 * np.einsum("bik,bi->bk", dr_t, res)
        grad[:, sl] += 2.0 * np.einsum("bik,bi->bk", dr_f, res)
    return values, grad


def _relative_orientation_terms(state: _HandState, grasp: GraspSpec, psi):
    psi2 = np.asarray(psi, dtype=float) ** 2
    values = np.zeros(len(state.Q))
    grad = np.zeros_like(state.Q)
    if not np.any(psi2):
        return values, grad
    for idx in range(len(grasp.grasp_fingers)):
        sl, r, dr_t, dr_f = state.relative(idx)
        diff = wrap_angle(direction_yaw_pitch(r) - grasp.rel_rpy[idx])
        values += np.einsum("bi,i,bi->b", diff, psi2, diff)
        D = _rpy_of_direction_jacobian(r)
        wdiff = 2.0 * psi2 * diff
        grad[:, state.thumb_slice] += np.einsum("bi,bij,bjk->bk", wdiff, D, dr_t)
        grad[:, sl] += np.einsum("bi,bij,bjk->bk", wdiff, D, dr_f)
    return values, grad


def object_pose_cost(q_t, target: Pose, grasp: GraspSpec, w_or: float = 1.0):
    """Squared pose error between the thumb tip and the thumb pose implied by ``target``.

    ``target`` is an object pose in the palm frame; only thumb joints receive
    gradient.
    """
    state = _HandState(grasp, q_t)
    value, grad, _ = _object_terms(state, grasp.thumb_target(target)[None], np.ones(1), w_or)
    return value, grad[0]


def waypoint_schedule(X0: Pose, Xg: Pose, T: int) -> list:
    """Interior object poses ``W_1 .. W_{T-1}`` equally spaced between ``X0`` and ``Xg``.

    Positions are interpolated linearly and orientations by slerp.
    """
    if T < 2:
        raise ValueError("T must be at least 2")
    out = []
    for t in range(1, T):
        s = t / T
        p = (1.0 - s) * X0.position + s * Xg.position
        out.append(Pose(p, quat_slerp(X0.orientation, Xg.orientation, s)))
    return out


def relative_position_cost(q_t, grasp: GraspSpec):
    """Deviation of fingertip positions, seen from the thumb, from the initial grasp."""
    values, grad = _relative_position_terms(_HandState(grasp, q_t), grasp)
    return float(values[0]), grad[0]


def relative_orientation_cost(q_t, grasp: GraspSpec, psi=(0.0, 1.0, 0.0)):
    """psi-weighted deviation of thumb-to-finger direction angles from the initial grasp."""
    state = _HandState(grasp, q_t)
    for idx in range(len(grasp.grasp_fingers)):
        if np.linalg.norm(state.relative(idx)[1]) < 1e-9:
            raise DegenerateDirectionError(
                f"fingertips of {grasp.thumb!r} and {grasp.grasp_fingers[idx]!r} coincide")
    values, grad = _relative_orientation_terms(state, grasp, psi)
    return float(values[0]), grad[0]


def _acc_operator(n_steps):
    """Matrix mapping a ``(T+1)``-step trajectory to its padded second differences."""
    T = n_steps - 1
    # padded sequence: theta_{-2}, theta_{-1}, theta_0..theta_T, theta_{T+1}
    P = np.zeros((T + 4, n_steps))
    P[0, 0] = P[1, 0] = 1.0
    P[2:T + 3, :] = np.eye(n_steps)
    P[T + 3, T] = 1.0
    D = np.zeros((T + 2, T + 4))
    for t in range(T + 2):
        D[t, t:t + 3] = (1.0, -2.0, 1.0)
    return D @ P


def joint_acceleration_cost(steps, alpha1: float = 0.01):
    """Sum of squared padded second differences of a ``(T+1, n)`` trajectory."""
    steps = np.asarray(steps, dtype=float)
    if steps.ndim == 1:
        steps = steps[:, None]
    if len(steps) < 2:
        raise ValueError("trajectory needs at least two steps")
    A = _acc_operator(len(steps))
    r = A @ steps
    return float(alpha1 * np.sum(r * r)), 2.0 * alpha1 * (A.T @ r)


def _obstacle_distance(grasp, scene, T_obj, obstacle, beta):
    """Minimum signed distance over object pieces, or ``None`` if provably >= beta."""
    best = None
    for piece in scene.object_pieces:
        placed = piece.placed(T_obj)
        gap = np.linalg.norm(placed.center - obstacle.center)
        if gap - placed.bounding_radius() - obstacle.bounding_radius() >= beta:
            continue
        res = distance_query(placed, obstacle)
        if best is None or res.distance < best[0].distance:
            best = (res, placed)
    return best


def _collision_rows(q_t, grasp: GraspSpec, scene: ConvexScene, beta, fd_step):
    """Per obstacle, ``h = beta - SD`` and its gradient over the full configuration.

    Obstacles that a bounding-sphere test proves to be at least ``beta`` away
    report that bound in place of the signed distance, with zero gradient.
    """
    hand = grasp.hand
    sl = hand.finger_slice(grasp.thumb)
    T_th, J = fk_and_jacobian(hand, grasp.thumb, q_t)
    T_th, J = T_th[0], J[0]
    T_obj = T_th @ grasp.thumb_to_object
    h = np.empty(len(scene.obstacles))
    dh = np.zeros((len(scene.obstacles), len(q_t)))
    for k, obstacle in enumerate(scene.obstacles):
        hit = _obstacle_distance(grasp, scene, T_obj, obstacle, beta)
        if hit is None:
            h[k] = beta - min(
                np.linalg.norm(p.placed(T_obj).center - obstacle.center)
                - p.bounding_radius() - obstacle.bounding_radius() for p in scene.object_pieces)
            continue
        res = hit[0]
        h[k] = beta - res.distance
        if res.cores_disjoint:
            lever = res.point_a - T_th[:3, 3]
            dsd = res.normal @ J[:3] + np.cross(lever, res.normal) @ J[3:]
        else:
            dsd = np.zeros(sl.stop - sl.start)
            for j in range(len(dsd)):
                qp = q_t.copy()
                qm = q_t.copy()
                qp[sl.start + j] += fd_step
                qm[sl.start + j] -= fd_step
                dsd[j] = (_min_sd(grasp, scene, qp, obstacle)
                          - _min_sd(grasp, scene, qm, obstacle)) / (2 * fd_step)
        dh[k, sl] = -dsd
    return h, dh


def collision_cost(q_t, grasp: GraspSpec, scene: ConvexScene, alpha2=1000.0, beta=0.005,
                   fd_step=1e-5):
    """Truncated signed-distance penalty of the grasped object against the obstacles.

    Gradients follow the closest-point witness direction while the shape cores
    are apart and fall back to central differences over the thumb joints when
    the cores interpenetrate.
    """
    q_t = np.asarray(q_t, dtype=float)
    h, dh = _collision_rows(q_t, grasp, scene, beta, fd_step)
    on = h > 0
    return float(alpha2 * h[on].sum()), alpha2 * dh[on].sum(axis=0)


def collision_residuals(steps, grasp: GraspSpec, scene: ConvexScene, beta=0.005, fd_step=1e-5):
    """Hinge arguments ``h = beta - SD`` for every (step, obstacle) pair.

    Returns ``h`` of shape ``(T+1, n_obstacles)`` and its Jacobian of shape
    ``(T+1, n_obstacles, n_dof)``; the collision cost is
    ``alpha2 * sum(max(0, h))``.
    """
    steps = np.asarray(steps, dtype=float)
    rows = [_collision_rows(q, grasp, scene, beta, fd_step) for q in steps]
    return np.stack([r[0] for r in rows]), np.stack([r[1] for r in rows])


def _min_sd(grasp, scene, q, obstacle):
    T_obj = grasp.object_transform(q)
    return min(distance_query(p.placed(T_obj), obstacle).distance for p in scene.object_pieces)


def smooth_cost(steps, problem: PlanProblem):
    """Objective without the collision penalty: every remaining term is a sum of squares."""
    steps = np.asarray(steps, dtype=float)
    if steps.shape != (problem.T + 1, problem.grasp.hand.dof):
        raise ValueError(f"trajectory shape {steps.shape} does not match the problem")
    grasp = problem.grasp
    w = problem.weights
    state = _HandState(grasp, steps)
    value, grad, _ = _object_terms(state, problem.thumb_targets, problem.pose_weights, w.w_or)
    pos_v, pos_g = _relative_position_terms(state, grasp)
    value += w.k2 * float(pos_v.sum())
    grad += w.k2 * pos_g
    if w.k3 > 0:
        or_v, or_g = _relative_orientation_terms(state, grasp, w.psi)
        value += w.k3 * float(or_v.sum())
        grad += w.k3 * or_g
    if problem.mode == JOINT_ACC:
        acc_v, acc_g = joint_acceleration_cost(steps, w.alpha1)
        value += acc_v
        grad += acc_g
    return value, grad


def total_cost(steps, problem: PlanProblem):
    """Full objective on a ``(T+1, n_dof)`` trajectory with its stacked gradient."""
    value, grad = smooth_cost(steps, problem)
    if problem.scene is not None:
        w = problem.weights
        for t, q in enumerate(np.asarray(steps, dtype=float)):
            c_v, c_g = collision_cost(q, problem.grasp, problem.scene, w.alpha2, w.beta)
            value += c_v
            grad[t] += c_g
    return value, grad


def gauss_newton_hessian(steps, problem: PlanProblem) -> np.ndarray:
    """Gauss-Newton curvature of :func:`total_cost`, shape ``(N, N)`` with ``N = (T+1) n_dof``.

    Every smooth term is a weighted sum of squared residuals, so ``2 J^T J``
    of the stacked residuals is a positive semi-definite model of the
    Hessian. The collision penalty is linear in the signed distance and
    contributes no curvature.
    """
    steps = np.asarray(steps, dtype=float)
    grasp = problem.grasp
    w = problem.weights
    n_steps, n = steps.shape
    state = _HandState(grasp, steps)
    blocks = np.zeros((n_steps, n, n))
    th = state.thumb_slice
    _, De = pose_error_jacobian(state.T_thumb, state.J_thumb, problem.thumb_targets, w.w_or)
    blocks[:, th, th] += 2.0 * problem.pose_weights[:, None, None] * np.einsum(
        "bik,bil->bkl", De, De)
    psi = np.asarray(w.psi)
    for idx in range(len(grasp.grasp_fingers)):
        sl, r, dr_t, dr_f = state.relative(idx)
        cols = np.r_[np.arange(th.start, th.stop), np.arange(sl.start, sl.stop)]
        Jr = np.concatenate([dr_t, dr_f], axis=2)
        H = 2.0 * w.k2 * np.einsum("bik,bil->bkl", Jr, Jr)
        if w.k3 > 0 and np.any(psi):
            Jo = psi[None, :, None] * (_rpy_of_direction_jacobian(r) @ Jr)
            H += 2.0 * w.k3 * np.einsum("bik,bil->bkl", Jo, Jo)
        blocks[:, cols[:, None], cols[None, :]] += H
    out = np.zeros((n_steps * n, n_steps * n))
    for t in range(n_steps):
        out[t * n:(t + 1) * n, t * n:(t + 1) * n] = blocks[t]
    if problem.mode == JOINT_ACC:
        A = _acc_operator(n_steps)
        out += 2.0 * w.alpha1 * np.kron(A.T @ A, np.eye(n))
    return out


def cost_breakdown(steps, problem: PlanProblem) -> dict:
    """Unweighted per-term totals, for reports."""
    steps = np.asarray(steps, dtype=float)
    grasp = problem.grasp
    state = _HandState(grasp, steps)
    _, _, obj = _object_terms(state, problem.thumb_targets, problem.pose_weights,
                              problem.weights.w_or)
    out = {
        "goal_pose": float(obj[-1]),
        "waypoints": float(obj[:-1].sum()) if problem.mode == WAYPOINT_INTERP else 0.0,
        "relative_position": float(_relative_position_terms(state, grasp)[0].sum()),
        "relative_orientation": float(
            _relative_orientation_terms(state, grasp, problem.weights.psi)[0].sum()),
        "joint_acceleration": joint_acceleration_cost(steps, 1.0)[0],
    }
    if problem.scene is not None:
        out["collision"] = sum(collision_cost(q, grasp, problem.scene, problem.weights.alpha2,
                                              problem.weights.beta)[0] for q in steps)
    return out
