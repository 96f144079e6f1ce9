import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ingrasp.costs import pose_difference
from ingrasp.feedback import FeedbackConfig, feedback_command, predicted_contact_pose
from ingrasp.kinematics import fk_transform, jacobian
from ingrasp.transforms import Pose, rotvec_to_matrix


def random_pose(rng):
    T = np.eye(4)
    T[:3, :3] = rotvec_to_matrix(rng.normal(size=3))
    T[:3, 3] = rng.normal(size=3)
    return Pose.from_matrix(T)


def thumb_error(grasp, q, target):
    return np.linalg.norm(pose_difference(fk_transform(grasp.hand, grasp.thumb, q), target, 0.05))


def test_predicted_contact_pose_examples():
    rng = np.random.default_rng(0)
    X = random_pose(rng)
    assert predicted_contact_pose(X, np.eye(4)).allclose(X, atol=1e-12)
    T = random_pose(rng).matrix()
    assert predicted_contact_pose(Pose(), T).allclose(Pose.from_matrix(T), atol=1e-12)
    for _ in range(20):
        X, T = random_pose(rng), random_pose(rng).matrix()
        assert np.abs(predicted_contact_pose(X, T).matrix() - X.matrix() @ T).max() < 1e-12


def test_consistent_observation_leaves_plan(grasp):
    q = grasp.theta0 + 0.05
    X = Pose.from_matrix(grasp.object_transform(q))
    U = feedback_command(q, X, X, grasp.object_to_thumb, grasp.hand)
    assert np.array_equal(U, q)


def test_zero_gain_leaves_plan(grasp):
    rng = np.random.default_rng(1)
    q = grasp.theta0.copy()
    U = feedback_command(q, random_pose(rng), random_pose(rng), random_pose(rng).matrix(),
                         grasp.hand, FeedbackConfig(gain=0.0))
    assert np.array_equal(U, q)


def test_millimetre_offset_is_reduced(grasp):
    q = grasp.theta0.copy()
    sl = grasp.hand.finger_slice(grasp.thumb)
    J = jacobian(grasp.hand, grasp.thumb, q)
    for col in range(J.shape[1]):
        v = J[:3, col] / np.linalg.norm(J[:3, col])
        # the observed slip moved the thumb 1 mm along this column's direction
        slip = np.eye(4)
        slip[:3, 3] = 0.001 * v
        T_thumb = fk_transform(grasp.hand, grasp.thumb, q)
        obj_to_thumb = grasp.object_to_thumb @ np.linalg.inv(T_thumb) @ slip @ T_thumb
        X = Pose.from_matrix(grasp.object_transform(q))
        U = feedback_command(q, X, X, obj_to_thumb, grasp.hand)
        H = X.matrix() @ obj_to_thumb
        assert thumb_error(grasp, U, H) < thumb_error(grasp, q, H)
        assert np.array_equal(np.delete(U, np.r_[sl]), np.delete(q, np.r_[sl]))


@given(st.integers(0, 100_000))
def test_only_thumb_changes_and_limits_hold(grasp, seed):
    rng = np.random.default_rng(seed)
    hand = grasp.hand
    q = rng.uniform(hand.lower, hand.upper)
    X = Pose.from_matrix(grasp.object_transform(q))
    T_ot = grasp.object_to_thumb.copy()
    T_ot[:3, 3] += rng.normal(0, 0.003, 3)
    U = feedback_command(q, X, X, T_ot, hand, FeedbackConfig(gain=rng.uniform(0, 500)),
                         theta_measured=q + rng.normal(0, 0.01, hand.dof))
    sl = hand.finger_slice(grasp.thumb)
    mask = np.ones(hand.dof, dtype=bool)
    mask[sl] = False
    assert np.array_equal(U[mask], q[mask])
    assert np.all(U >= hand.lower) and np.all(U <= hand.upper)


@given(st.integers(0, 100_000))
def test_transpose_step_is_descent(grasp, seed):
    """A small step along -De^T e lowers the squared pose error whenever De^T e != 0."""
    rng = np.random.default_rng(seed)
    hand = grasp.hand
    q = grasp.theta0 + rng.uniform(-0.3, 0.3, hand.dof)
    q = np.clip(q, hand.lower + 0.05, hand.upper - 0.05)
    T_ot = grasp.object_to_thumb.copy()
    T_ot[:3, 3] += rng.normal(0, 0.002, 3)
    X = Pose.from_matrix(grasp.object_transform(q))
    H = X.matrix() @ T_ot
    cfg = FeedbackConfig(gain=1.0, jacobian_at="planned")
    U = feedback_command(q, X, X, T_ot, hand, cfg)
    assert thumb_error(grasp, U, H) < thumb_error(grasp, q, H)


def test_derived_object_to_thumb(grasp):
    q = grasp.theta0.copy()
    X = Pose.from_matrix(grasp.object_transform(q))
    U = feedback_command(q, X, X, None, grasp.hand, theta_measured=q)
    assert np.array_equal(U, q)
    with pytest.raises(ValueError):
        feedback_command(q, X, X, None, grasp.hand)


def test_config_validation():
    with pytest.raises(ValueError):
        FeedbackConfig(gain=-1)
    with pytest.raises(ValueError):
        FeedbackConfig(jacobian_at="elsewhere")
