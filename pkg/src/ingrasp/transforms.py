"""Rigid-body pose helpers.

Quaternions are stored scalar-first as ``(w, x, y, z)``. Roll/pitch/yaw are
extrinsic X-Y-Z angles, i.e. ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``. Most
matrix helpers accept stacked inputs with arbitrary leading batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PI = np.pi


def wrap_angle(a):
    """Wrap angles to the half-open interval (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + PI, 2.0 * PI) - PI
    # mod maps odd multiples of pi to -pi; fold those onto +pi
    return np.where(w <= -PI, w + 2.0 * PI, w)


def skew(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def axis_angle_matrix(axis, angle):
    """Rodrigues rotation about a unit ``axis`` (..., 3) by ``angle`` (...)."""
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    K = skew(axis)
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + s * K + (1.0 - c) * (K @ K)


def rotvec_to_matrix(v):
    """Rotation matrix of a rotation vector (axis times angle)."""
    v = np.asarray(v, dtype=float)
    angle = float(np.linalg.norm(v))
    if angle < 1e-300:
        return np.eye(3)
    return axis_angle_matrix(v / angle, angle)


def rpy_to_matrix(rpy):
    rpy = np.asarray(rpy, dtype=float)
    r, p, y = rpy[..., 0], rpy[..., 1], rpy[..., 2]
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    R = np.empty(rpy.shape[:-1] + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def matrix_to_rpy(R):
    """Extract wrapped extrinsic X-Y-Z angles from rotation matrices."""
    R = np.asarray(R, dtype=float)
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    pitch = np.arctan2(-R[..., 2, 0], np.hypot(R[..., 0, 0], R[..., 1, 0]))
    yaw = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    return wrap_angle(np.stack([roll, pitch, yaw], axis=-1))


def rpy_rate_inverse(rpy):
    """Map a spatial angular velocity to roll/pitch/yaw rates.

    Returns ``E^-1`` where ``omega = E @ d(rpy)/dt``; singular at pitch = +-pi/2.
    """
    rpy = np.asarray(rpy, dtype=float)
    p, y = rpy[..., 1], rpy[..., 2]
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    Einv = np.zeros(rpy.shape[:-1] + (3, 3))
    Einv[..., 0, 0] = cy / cp
    Einv[..., 0, 1] = sy / cp
    Einv[..., 1, 0] = -sy
    Einv[..., 1, 1] = cy
    Einv[..., 2, 0] = cy * sp / cp
    Einv[..., 2, 1] = sy * sp / cp
    Einv[..., 2, 2] = 1.0
    return Einv


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - z * w)
    R[..., 0, 2] = 2 * (x * z + y * w)
    R[..., 1, 0] = 2 * (x * y + z * w)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - x * w)
    R[..., 2, 0] = 2 * (x * z - y * w)
    R[..., 2, 1] = 2 * (y * z + x * w)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_to_quat(R):
    """Rotation matrix to unit quaternion with non-negative ``w``."""
    R = np.asarray(R, dtype=float)
    if R.ndim > 2:
        return np.stack([matrix_to_quat(r) for r in R.reshape(-1, 3, 3)]).reshape(
            R.shape[:-2] + (4,))
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    # Shepperd's method: pivot on the largest diagonal term
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
             (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s,
             (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s,
             (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
             (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_multiply(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q, v):
    """Rotate vector(s) ``v`` by quaternion(s) ``q``."""
    qv = np.concatenate([np.zeros(np.shape(v)[:-1] + (1,)), np.asarray(v, float)], axis=-1)
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[..., 1:]


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2.0)], np.sin(angle / 2.0) * axis])


def quat_slerp(q0, q1, s):
    """Constant angular-velocity interpolation between two unit quaternions."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1, dot = -q1, -dot
    if dot > 1.0 - 1e-12:
        q = q0 + s * (q1 - q0)
        return q / np.linalg.norm(q)
    theta = np.arccos(min(dot, 1.0))
    q = (np.sin((1.0 - s) * theta) * q0 + np.sin(s * theta) * q1) / np.sin(theta)
    return q / np.linalg.norm(q)


def make_transform(R, p):
    R = np.asarray(R, dtype=float)
    p = np.asarray(p, dtype=float)
    T = np.zeros(np.broadcast_shapes(R.shape[:-2], p.shape[:-1]) + (4, 4))
    T[..., :3, :3] = R
    T[..., :3, 3] = p
    T[..., 3, 3] = 1.0
    return T


def invert_transform(T):
    T = np.asarray(T, dtype=float)
    R = T[..., :3, :3]
    Rt = np.swapaxes(R, -1, -2)
    return make_transform(Rt, -(Rt @ T[..., :3, 3:4])[..., 0])


def xyz_rpy_to_transform(xyz, rpy):
    return make_transform(rpy_to_matrix(rpy), xyz)


def _unit_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise ValueError(f"invalid quaternion {q!r}")
    q = q / n
    # the first clearly non-zero component is made positive (w >= 0 unless w ~ 0)
    lead = q[int(np.argmax(np.abs(q) > 1e-9))]
    return -q if lead < 0 else q


@dataclass(frozen=True, eq=False)
class Pose:
    """Position in meters plus a unit quaternion ``(w, x, y, z)``.

    The quaternion is normalised and its sign fixed on construction (``w > 0``,
    or the first clearly non-zero component positive for half-turns), so
    equal rotations compare equal component-wise.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = _unit_quat(self.orientation)
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3].copy(), matrix_to_quat(T[:3, :3]))

    @classmethod
    def from_xyz_rpy(cls, xyz, rpy) -> Pose:
        return cls(xyz, matrix_to_quat(rpy_to_matrix(rpy)))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    @property
    def rpy(self) -> np.ndarray:
        return matrix_to_rpy(self.rotation)

    def matrix(self) -> np.ndarray:
        return make_transform(self.rotation, self.position)

    def compose(self, other: Pose) -> Pose:
        """Return ``self * other`` (``other`` expressed in this pose's frame)."""
        p = self.position + quat_rotate(self.orientation, other.position)
        return Pose(p, quat_multiply(self.orientation, other.orientation))

    __mul__ = compose

    def inverse(self) -> Pose:
        qc = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(qc, self.position), qc)

    def allclose(self, other: Pose, atol: float = 1e-9) -> bool:
        """Equality up to ``atol`` treating ``q`` and ``-q`` as the same rotation."""
        if not np.allclose(self.position, other.position, rtol=0.0, atol=atol):
            return False
        d = min(np.abs(self.orientation - other.orientation).max(),
                np.abs(self.orientation + other.orientation).max())
        return bool(d <= atol)

    def to_dict(self) -> dict:
        return {"xyz": self.position.tolist(), "quat_wxyz": self.orientation.tolist()}

    def __repr__(self) -> str:
        p = np.array2string(self.position, precision=5)
        q = np.array2string(self.orientation, precision=5)
        return f"Pose(position={p}, orientation={q})"
