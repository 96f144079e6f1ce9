"""Bundled desk-scale fixtures: a 16-dof synthetic hand, a grasp on it, goals and scenes.

The regression goals were produced by perturbing the thumb away from the
initial grasp and solving each finger's position inverse kinematics so that
the fingertips keep their initial placement relative to the thumb. Every goal
therefore comes with a witness configuration at which the relaxed-rigidity
terms vanish and the predicted object pose equals the goal.
"""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .geometry import ConvexScene, parse_scene
from .kinematics import HandModel, parse_hand_model
from .transforms import Pose

__all__ = [
    "fixture_path",
    "load_fixture_hand",
    "load_fixture_grasp",
    "load_regression_goals",
    "load_fixture_scene",
    "SCENES",
]

SCENES = ("obstacle", "distant")


def fixture_path(name: str):
    """Filesystem path of a bundled data file (for the command line and demos)."""
    return resources.files("ingrasp") / "data" / name


def _read(name):
    return json.loads(fixture_path(name).read_text())


def load_fixture_hand() -> HandModel:
    return parse_hand_model(_read("synthetic_hand.json"))


def load_fixture_grasp():
    """The bundled grasp; the object sits midway between the thumb and middle fingertips."""
    from .planner import load_grasp_spec

    return load_grasp_spec(_read("synthetic_grasp.json"), hand=load_fixture_hand())


def load_regression_goals(with_witness: bool = False):
    """The ten reachable goal poses (palm frame), optionally with witness configurations."""
    doc = _read("regression_goals.json")
    goals = [Pose.from_xyz_rpy(g["xyz"], g["rpy"]) for g in doc["goals"]]
    if not with_witness:
        return goals
    return goals, np.array([g["witness_theta"] for g in doc["goals"]])


def load_fixture_scene(name: str = "obstacle") -> ConvexScene:
    """``"obstacle"`` blocks the straight path of the +2 cm x goal; ``"distant"`` is far away."""
    if name not in SCENES:
        raise ValueError(f"unknown scene {name!r}; choose from {SCENES}")
    return parse_scene(_read(f"{name}_scene.json"))
