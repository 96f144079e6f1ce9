"""Serial-chain hand model, forward kinematics and geometric Jacobians.

A hand is a set of independent revolute chains rooted at the palm. Joint
angles for the whole hand live in one flat vector, finger-major, in the
order the fingers appear in the model document. All kinematic functions
accept either a single configuration ``(n_dof,)`` or a batch ``(B, n_dof)``
and return arrays with the matching leading axis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDirectionError, ModelError
from .transforms import Pose, axis_angle_matrix, wrap_angle, xyz_rpy_to_transform

__all__ = [
    "Joint",
    "Finger",
    "HandModel",
    "load_hand_model",
    "parse_hand_model",
    "hand_model_to_dict",
    "fk_transform",
    "fk_pose",
    "fk_position",
    "jacobian",
    "fk_and_jacobian",
    "relative_position",
    "relative_unit_vector_rpy",
    "direction_yaw_pitch",
]


@dataclass(frozen=True)
class Joint:
    name: str
    origin_xyz: tuple
    origin_rpy: tuple
    axis: tuple
    lower: float
    upper: float

    @property
    def origin(self) -> np.ndarray:
        return xyz_rpy_to_transform(self.origin_xyz, self.origin_rpy)


@dataclass(frozen=True)
class Finger:
    name: str
    joints: tuple
    tip_xyz: tuple = (0.0, 0.0, 0.0)
    tip_rpy: tuple = (0.0, 0.0, 0.0)

    @property
    def tip(self) -> np.ndarray:
        return xyz_rpy_to_transform(self.tip_xyz, self.tip_rpy)


class HandModel:
    """Kinematic description of a multi-finger hand rooted at the palm frame."""

    def __init__(self, name, fingers):
        self.name = name
        self.fingers = tuple(fingers)
        names = [f.name for f in self.fingers]
        if len(set(names)) != len(names):
            raise ModelError(f"duplicate finger names in {names}")
        self._slices = {}
        start = 0
        for f in self.fingers:
            self._slices[f.name] = slice(start, start + len(f.joints))
            start += len(f.joints)
        self.dof = start
        self.lower = np.array([j.lower for f in self.fingers for j in f.joints])
        self.upper = np.array([j.upper for f in self.fingers for j in f.joints])
        # cached per-finger constant matrices
        self._origins = {f.name: np.stack([j.origin for j in f.joints]) for f in self.fingers}
        self._axes = {f.name: np.array([j.axis for j in f.joints], dtype=float)
                      for f in self.fingers}
        self._tips = {f.name: f.tip for f in self.fingers}

    def __repr__(self):
        return f"HandModel({self.name!r}, fingers={self.finger_names}, dof={self.dof})"

    @property
    def finger_names(self) -> list:
        return [f.name for f in self.fingers]

    def finger(self, name) -> Finger:
        for f in self.fingers:
            if f.name == name:
                return f
        raise KeyError(f"unknown finger {name!r}; model has {self.finger_names}")

    def finger_slice(self, name) -> slice:
        try:
            return self._slices[name]
        except KeyError:
            raise KeyError(f"unknown finger {name!r}; model has {self.finger_names}") from None

    def clip(self, q):
        return np.clip(q, self.lower, self.upper)


def parse_hand_model(doc: dict) -> HandModel:
    """Validate a hand-model document (already decoded) and build the model."""
    if not isinstance(doc, dict):
        raise ModelError("hand model document must be a mapping")
    for key in ("name", "fingers"):
        if key not in doc:
            raise ModelError(f"hand model missing required field {key!r}")
    if not isinstance(doc["fingers"], list) or not doc["fingers"]:
        raise ModelError("hand model 'fingers' must be a non-empty list")
    fingers = []
    for fi, fdoc in enumerate(doc["fingers"]):
        fname = fdoc.get("name")
        if not isinstance(fname, str) or not fname:
            raise ModelError(f"finger #{fi} has no 'name'")
        jdocs = fdoc.get("joints")
        if not isinstance(jdocs, list) or not jdocs:
            raise ModelError(f"finger {fname!r} must list at least one joint")
        joints = []
        for ji, jdoc in enumerate(jdocs):
            label = f"finger {fname!r} joint {jdoc.get('name', ji)!r}"
            try:
                xyz = _vec3(jdoc, "origin_xyz", default=(0.0, 0.0, 0.0))
                rpy = _vec3(jdoc, "origin_rpy", default=(0.0, 0.0, 0.0))
                axis = _vec3(jdoc, "axis")
                lo = float(jdoc["limit_lower"])
                hi = float(jdoc["limit_upper"])
            except KeyError as exc:
                raise ModelError(f"{label}: missing field {exc.args[0]!r}") from None
            except (TypeError, ValueError) as exc:
                raise ModelError(f"{label}: {exc}") from None
            n = float(np.linalg.norm(axis))
            if n < 1e-12:
                raise ModelError(f"{label}: zero-norm axis")
            if abs(n - 1.0) > 1e-9:
                raise ModelError(f"{label}: axis {axis} is not unit length (norm {n:.6g})")
            if not lo < hi:
                raise ModelError(f"{label}: inverted limits [{lo}, {hi}]")
            joints.append(Joint(str(jdoc.get("name", f"{fname}_{ji}")), xyz, rpy, axis, lo, hi))
        try:
            tip_xyz = _vec3(fdoc, "tip_xyz", default=(0.0, 0.0, 0.0))
            tip_rpy = _vec3(fdoc, "tip_rpy", default=(0.0, 0.0, 0.0))
        except (TypeError, ValueError) as exc:
            raise ModelError(f"finger {fname!r} tip: {exc}") from None
        fingers.append(Finger(fname, tuple(joints), tip_xyz, tip_rpy))
    return HandModel(str(doc["name"]), fingers)


def _vec3(d, key, default=None):
    if key not in d:
        if default is None:
            raise KeyError(key)
        return tuple(default)
    v = [float(x) for x in d[key]]
    if len(v) != 3:
        raise ValueError(f"{key} must have 3 components, got {len(v)}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{key} has non-finite entries")
    return tuple(v)


def load_hand_model(source) -> HandModel:
    """Load a hand model from a JSON file path, JSON text, or decoded mapping."""
    if isinstance(source, dict):
        return parse_hand_model(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ModelError(f"cannot read hand model {source}: {exc}") from None
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"hand model is not valid JSON: {exc}") from None
    return parse_hand_model(doc)


def hand_model_to_dict(model: HandModel) -> dict:
    return {
        "name": model.name,
        "fingers": [
            {
                "name": f.name,
                "joints": [
                    {
                        "name": j.name,
                        "origin_xyz": list(j.origin_xyz),
                        "origin_rpy": list(j.origin_rpy),
                        "axis": list(j.axis),
                        "limit_lower": j.lower,
                        "limit_upper": j.upper,
                    }
                    for j in f.joints
                ],
                "tip_xyz": list(f.tip_xyz),
                "tip_rpy": list(f.tip_rpy),
            }
            for f in model.fingers
        ],
    }


def _chain(model: HandModel, finger: str, q):
    """Walk one finger's chain.

    Returns joint axes and joint origins in the palm frame, shape
    ``(B, k, 3)`` each, and the fingertip transform ``(B, 4, 4)``.
    """
    sl = model.finger_slice(finger)
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != model.dof:
        raise ValueError(f"configuration has {q.shape[-1]} entries, model has {model.dof} dof")
    qf = np.atleast_2d(q)[:, sl]
    B, k = qf.shape
    origins = model._origins[finger]
    axes = model._axes[finger]
    T = np.broadcast_to(np.eye(4), (B, 4, 4))
    z = np.empty((B, k, 3))
    o = np.empty((B, k, 3))
    for j in range(k):
        T = T @ origins[j]
        z[:, j] = T[:, :3, :3] @ axes[j]
        o[:, j] = T[:, :3, 3]
        rot = np.zeros((B, 4, 4))
        rot[:, :3, :3] = axis_angle_matrix(axes[j], qf[:, j])
        rot[:, 3, 3] = 1.0
        T = T @ rot
    T = T @ model._tips[finger]
    return z, o, T


def _unbatch(q, arr):
    return arr[0] if np.ndim(q) == 1 else arr


def fk_transform(model: HandModel, finger: str, q) -> np.ndarray:
    """Fingertip homogeneous transform(s) in the palm frame."""
    return _unbatch(q, _chain(model, finger, q)[2])


def fk_pose(model: HandModel, finger: str, q):
    """Fingertip pose in the palm frame; a list of poses for batched input."""
    T = fk_transform(model, finger, q)
    if T.ndim == 2:
        return Pose.from_matrix(T)
    return [Pose.from_matrix(t) for t in T]


def fk_position(model: HandModel, finger: str, q) -> np.ndarray:
    return fk_transform(model, finger, q)[..., :3, 3]


def _jacobian_from_chain(z, o, T):
    lin = np.cross(z, T[:, None, :3, 3] - o)
    return np.concatenate([np.swapaxes(lin, 1, 2), np.swapaxes(z, 1, 2)], axis=1)


def fk_and_jacobian(model: HandModel, finger: str, q):
    """Fingertip transform ``(B, 4, 4)`` and Jacobian ``(B, 6, k)`` in one chain walk."""
    z, o, T = _chain(model, finger, q)
    return T, _jacobian_from_chain(z, o, T)


def jacobian(model: HandModel, finger: str, q) -> np.ndarray:
    """Geometric fingertip Jacobian, linear rows first, in the palm frame.

    Columns cover only the joints of ``finger`` (shape ``6 x k``).
    """
    z, o, T = _chain(model, finger, q)
    return _unbatch(q, _jacobian_from_chain(z, o, T))


def relative_position(model: HandModel, thumb: str, finger: str, q) -> np.ndarray:
    """Fingertip position of ``finger`` expressed in the ``thumb`` tip frame."""
    Tt = fk_transform(model, thumb, q)
    pf = fk_position(model, finger, q)
    d = pf - Tt[..., :3, 3]
    return np.einsum("...ji,...j->...i", Tt[..., :3, :3], d)


def direction_yaw_pitch(r):
    """Roll/pitch/yaw of the zero-roll rotation taking +x onto direction ``r``."""
    r = np.asarray(r, dtype=float)
    yaw = np.arctan2(r[..., 1], r[..., 0])
    pitch = np.arctan2(-r[..., 2], np.hypot(r[..., 0], r[..., 1]))
    return wrap_angle(np.stack([np.zeros_like(yaw), pitch, yaw], axis=-1))


def relative_unit_vector_rpy(model: HandModel, thumb: str, finger: str, q) -> np.ndarray:
    """Roll, pitch, yaw of the thumb-to-finger direction in the thumb tip frame.

    The direction is rotated onto the thumb frame's x axis; pitch and yaw
    follow from the direction alone and roll is reported as zero.
    """
    if thumb == finger:
        raise ValueError("thumb and finger must differ")
    r = relative_position(model, thumb, finger, q)
    if np.any(np.linalg.norm(r, axis=-1) < 1e-9):
        raise DegenerateDirectionError(f"fingertips of {thumb!r} and {finger!r} coincide")
    return direction_yaw_pitch(r)

