import json

import numpy as np
import pytest

from ingrasp.costs import JOINT_ACC, GraspSpec, joint_acceleration_cost
from ingrasp.errors import ModelError
from ingrasp.fixtures import fixture_path, load_fixture_scene
from ingrasp.geometry import scene_min_signed_distance
from ingrasp.kinematics import fk_transform
from ingrasp.optimizer import Trajectory, velocity_residuals
from ingrasp.planner import (
    PlannerConfig,
    audit_feasibility,
    grasp_spec_to_dict,
    load_grasp_spec,
    orientation_error_pct,
    plan,
    plan_to_dict,
    predicted_object_path,
    upsample,
)
from ingrasp.transforms import Pose, quat_from_axis_angle


def shifted(pose, dx):
    return Pose(pose.position + np.asarray(dx, dtype=float), pose.orientation)


def test_identity_plan(grasp):
    res = plan(grasp, grasp.object_pose)
    assert res.report.converged
    assert np.array_equal(res.coarse.steps, np.tile(grasp.theta0, (11, 1)))
    assert res.report.final_cost == pytest.approx(0.0, abs=1e-20)


def test_two_centimetre_goal(grasp):
    goal = shifted(grasp.object_pose, [0.02, 0, 0])
    res = plan(grasp, goal)
    assert res.report.converged
    assert res.position_error <= 0.002
    assert res.report.wall_time < 10.0


def test_three_centimetre_goal_is_feasible(grasp):
    res = plan(grasp, shifted(grasp.object_pose, [0.0, 0.0, 0.03]))
    assert res.report.converged
    assert velocity_residuals(res.coarse, 0.6).max() <= 1e-6
    audit = audit_feasibility(res, grasp.hand, 0.6)
    assert audit["limit_violation"] == 0.0 and audit["velocity_violation"] <= 1e-6


def test_tight_velocity_bound(grasp):
    cfg = PlannerConfig(v_max=0.1)
    res = plan(grasp, shifted(grasp.object_pose, [0.02, 0, 0]), cfg)
    assert res.report.converged
    assert velocity_residuals(res.coarse, 0.1).max() <= 1e-6


def test_obstacle_scene_keeps_clear(grasp):
    goal = shifted(grasp.object_pose, [0.02, 0, 0])
    scene = load_fixture_scene("obstacle")
    free = plan(grasp, goal)
    # the scene blocks the unconstrained path
    assert min(min(scene_min_signed_distance(scene, p)) for p in free.object_path) < 0
    res = plan(grasp, goal, PlannerConfig(scene=scene))
    assert not res.collision_audit_failed
    assert res.min_scene_distance >= 0.0
    assert res.position_error <= 0.005


def test_distant_scene_is_bit_identical(grasp):
    goal = shifted(grasp.object_pose, [0.02, 0, 0])
    a = plan(grasp, goal)
    b = plan(grasp, goal, PlannerConfig(scene=load_fixture_scene("distant")))
    assert np.array_equal(a.coarse.steps, b.coarse.steps)
    assert a.report.iterations == b.report.iterations
    assert a.report.final_cost == b.report.final_cost


def test_joint_acc_mode_is_smoother(grasp, goals):
    """Second differences padded with rest at both ends, as the acceleration term defines them."""
    def roughness(traj):
        return joint_acceleration_cost(traj.steps, 1.0)[0]

    goal = goals[0]
    a = plan(grasp, goal)
    b = plan(grasp, goal, PlannerConfig(mode=JOINT_ACC))
    assert roughness(b.coarse) <= roughness(a.coarse)


def test_upsample_examples():
    t = Trajectory(np.random.default_rng(0).normal(size=(11, 3)), 0.167)
    same = upsample(t, 11)
    assert np.allclose(same.steps, t.steps, atol=1e-15)
    assert same.dt == pytest.approx(t.dt)
    ramp = upsample(Trajectory(np.array([[0.0], [1.0]]), 1.0), 11)
    assert np.allclose(ramp.steps[:, 0], np.linspace(0, 1, 11), atol=1e-15)
    assert ramp.duration == pytest.approx(1.0)
    with pytest.raises(ValueError):
        upsample(t, 5)


def test_upsample_keeps_velocity_bounds():
    rng = np.random.default_rng(1)
    t = Trajectory(np.cumsum(rng.uniform(-0.1, 0.1, (11, 4)), axis=0), 0.167)
    dense = upsample(t, 100)
    coarse_speed = (np.abs(np.diff(t.steps, axis=0)) / t.dt).max()
    assert (np.abs(np.diff(dense.steps, axis=0)) / dense.dt).max() <= coarse_speed + 1e-12


def test_predicted_object_path(grasp):
    path = predicted_object_path(np.tile(grasp.theta0, (2, 1)), grasp)
    assert np.allclose(path[0].matrix(), grasp.object_pose.matrix(), atol=1e-12)
    rng = np.random.default_rng(2)
    Q = rng.uniform(grasp.hand.lower, grasp.hand.upper, (20, grasp.hand.dof))
    for q, p in zip(Q, predicted_object_path(Q, grasp)):
        oracle = fk_transform(grasp.hand, grasp.thumb, q) @ grasp.thumb_to_object
        assert np.abs(p.matrix() - oracle).max() < 1e-12


def test_thumb_translation_moves_object_identically(grasp):
    T = fk_transform(grasp.hand, grasp.thumb, grasp.theta0)
    moved = T.copy()
    moved[:3, 3] += [0.01, 0, 0]
    assert np.allclose((moved @ grasp.thumb_to_object)[:3, 3],
                       grasp.object_pose.position + [0.01, 0, 0], atol=1e-15)


def test_orientation_error_examples():
    ident = np.array([1.0, 0, 0, 0])
    assert orientation_error_pct(ident, quat_from_axis_angle([0, 0, 1], np.pi)) == \
        pytest.approx(100.0)
    assert orientation_error_pct(ident, quat_from_axis_angle([0, 0, 1], np.pi / 2)) == \
        pytest.approx(54.12, abs=5e-3)


def test_planner_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(v_max=0)
    with pytest.raises(ValueError):
        PlannerConfig(resolution=5)
    with pytest.raises(ValueError):
        PlannerConfig(mode="fast")


def test_grasp_documents(grasp, tmp_path):
    doc = grasp_spec_to_dict(grasp, fixture_path("synthetic_hand.json"))
    path = tmp_path / "grasp.json"
    path.write_text(json.dumps(doc))
    again = load_grasp_spec(path)
    assert isinstance(again, GraspSpec)
    assert np.array_equal(again.theta0, grasp.theta0)
    assert again.object_pose.allclose(grasp.object_pose, atol=1e-12)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.pop("theta0"), "theta0"),
    (lambda d: d.update(theta0=[0.0, 1.0]), "theta0"),
    (lambda d: d.update(theta0="abc"), "theta0"),
    (lambda d: d.update(thumb="pinky"), "thumb"),
    (lambda d: d.update(object_pose_xyz=[1, 2]), "object_pose"),
    (lambda d: d.pop("hand_model"), "hand_model"),
])
def test_grasp_parse_errors_name_the_field(grasp, mutate, field):
    doc = grasp_spec_to_dict(grasp, fixture_path("synthetic_hand.json"))
    mutate(doc)
    with pytest.raises(ModelError, match=field):
        load_grasp_spec(doc)


def test_plan_document(grasp):
    goal = shifted(grasp.object_pose, [0.01, 0, 0])
    cfg = PlannerConfig()
    res = plan(grasp, goal, cfg)
    doc = json.loads(json.dumps(plan_to_dict(res, cfg, goal)))
    assert len(doc["dense"]["steps"]) == 100 and len(doc["coarse"]["steps"]) == 11
    assert doc["config"]["weights"]["k2"] == 100.0
    assert doc["report"]["converged"] is True
