import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from ingrasp.transforms import (
    Pose,
    invert_transform,
    matrix_to_quat,
    matrix_to_rpy,
    quat_multiply,
    quat_slerp,
    quat_to_matrix,
    rotvec_to_matrix,
    rpy_to_matrix,
    wrap_angle,
)

angles = st.floats(-np.pi + 1e-3, np.pi - 1e-3)
rpy_st = st.tuples(angles, st.floats(-np.pi / 2 + 1e-3, np.pi / 2 - 1e-3), angles)
quat_st = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(
    lambda q: np.linalg.norm(q) > 1e-3)
xyz_st = arrays(np.float64, 3, elements=st.floats(-1, 1))


@given(rpy_st)
def test_rpy_is_extrinsic_xyz(rpy):
    expected = Rotation.from_euler("xyz", rpy).as_matrix()
    assert np.allclose(rpy_to_matrix(rpy), expected, atol=1e-12)


@given(rpy_st)
def test_rpy_round_trip(rpy):
    assert np.allclose(matrix_to_rpy(rpy_to_matrix(rpy)), rpy, atol=1e-9)


@given(st.floats(-50, 50))
def test_wrap_angle_half_open_interval(a):
    w = float(wrap_angle(a))
    assert -np.pi < w <= np.pi
    assert np.isclose(np.cos(w), np.cos(a), atol=1e-9) and np.isclose(np.sin(w), np.sin(a), atol=1e-9)


def test_wrap_angle_maps_minus_pi_to_pi():
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)


@given(quat_st)
def test_quaternion_matrix_round_trip(q):
    q = q / np.linalg.norm(q)
    R = quat_to_matrix(q)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-9)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
    back = matrix_to_quat(R)
    assert min(np.abs(back - q).max(), np.abs(back + q).max()) < 1e-9


@given(xyz_st, quat_st)
def test_pose_transform_round_trip(p, q):
    pose = Pose(p, q)
    assert np.linalg.norm(pose.orientation) == pytest.approx(1.0, abs=1e-9)
    back = Pose.from_matrix(pose.matrix())
    assert np.allclose(back.position, pose.position, atol=1e-12)
    assert np.allclose(back.orientation, pose.orientation, atol=1e-12)


@given(xyz_st, quat_st)
def test_identity_composition_is_noop(p, q):
    pose = Pose(p, q)
    for c in (pose * Pose.identity(), Pose.identity() * pose):
        assert np.allclose(c.position, pose.position, atol=1e-12)
        assert np.allclose(c.orientation, pose.orientation, atol=1e-12)


@given(xyz_st, quat_st, xyz_st, quat_st)
def test_composition_matches_matrix_product(p1, q1, p2, q2):
    a, b = Pose(p1, q1), Pose(p2, q2)
    c = a * b
    assert np.linalg.norm(c.orientation) == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(c.matrix(), a.matrix() @ b.matrix(), atol=1e-12)
    assert np.allclose((a.inverse() * a).matrix(), np.eye(4), atol=1e-12)


@given(xyz_st, quat_st)
def test_invert_transform(p, q):
    T = Pose(p, q).matrix()
    assert np.allclose(invert_transform(T) @ T, np.eye(4), atol=1e-12)


@given(arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_rotvec_matches_scipy(v):
    assert np.allclose(rotvec_to_matrix(v), Rotation.from_rotvec(v).as_matrix(), atol=1e-12)


def test_quaternion_canonical_sign():
    assert Pose(np.zeros(3), [-1, 0, 0, 0]).orientation[0] == 1.0


def test_slerp_midpoint_is_half_angle():
    q1 = np.array([np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)])
    mid = quat_slerp(np.array([1.0, 0, 0, 0]), q1, 0.5)
    assert np.allclose(mid, [np.cos(np.pi / 8), 0, 0, np.sin(np.pi / 8)], atol=1e-12)


def test_quat_multiply_matches_matrices():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.normal(size=4), rng.normal(size=4)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        assert np.allclose(quat_to_matrix(quat_multiply(a, b)),
                           quat_to_matrix(a) @ quat_to_matrix(b), atol=1e-12)
