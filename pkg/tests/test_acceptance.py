"""Acceptance criteria 1-9, each reported as one PASS/FAIL line at the end of the run."""
import time

import numpy as np
import pytest

from conftest import record_criterion
from ingrasp.cli import main
from ingrasp.costs import JOINT_ACC, joint_acceleration_cost
from ingrasp.feedback import FeedbackConfig
from ingrasp.fixtures import load_fixture_scene
from ingrasp.geometry import Sphere, scene_min_signed_distance, signed_distance
from ingrasp.gradcheck import audit_gradients
from ingrasp.kinematics import fk_transform
from ingrasp.optimizer import velocity_residuals
from ingrasp.planner import PlannerConfig, orientation_error_pct, plan
from ingrasp.simulator import DisturbanceModel, compute_metrics, simulate
from ingrasp.transforms import Pose

N_TRIALS = 20


def shifted(pose, dx):
    return Pose(pose.position + np.asarray(dx, dtype=float), pose.orientation)


@pytest.fixture(scope="module")
def plans(grasp, goals):
    """Waypoint and joint-acceleration plans for the ten regression goals, plus wall times."""
    out = {"waypoint": [], "joint-acc": [], "times": []}
    for g in goals:
        t0 = time.perf_counter()
        out["waypoint"].append(plan(grasp, g))
        out["times"].append(time.perf_counter() - t0)
        out["joint-acc"].append(plan(grasp, g, PlannerConfig(mode=JOINT_ACC)))
    return out


@pytest.fixture(scope="module")
def scene_plans(grasp):
    goal = shifted(grasp.object_pose, [0.02, 0, 0])
    return {
        "goal": goal,
        "none": plan(grasp, goal),
        "obstacle": plan(grasp, goal, PlannerConfig(scene=load_fixture_scene("obstacle"))),
        "distant": plan(grasp, goal, PlannerConfig(scene=load_fixture_scene("distant"))),
    }


def test_criterion_1_gradient_audit(grasp):
    report = audit_gradients(grasp, n_samples=100, seed=0)
    ok = report.passed and report.wall_time < 60.0
    worst = max(report.audits, key=lambda a: a.max_error)
    record_criterion(1, ok, f"{len(report.audits)} terms x 100 samples, worst relative error "
                     f"{worst.max_error:.2e} ({worst.term}), {report.wall_time:.1f} s")
    assert ok, report.table()


def test_criterion_2_feasibility(grasp, plans, scene_plans):
    hand = grasp.hand
    results = plans["waypoint"] + plans["joint-acc"] + [scene_plans[k] for k in
                                                        ("none", "obstacle", "distant")]
    converged = [r for r in results if r.report.converged]
    limit_ok = all(np.all(r.coarse.steps >= hand.lower) and np.all(r.coarse.steps <= hand.upper)
                   for r in converged)
    worst_vel = max(velocity_residuals(r.coarse, 0.6).max() for r in converged)
    ok = limit_ok and worst_vel <= 1e-6 and len(converged) == len(results)
    record_criterion(2, ok, f"{len(converged)}/{len(results)} plans converged, limits exact: "
                     f"{limit_ok}, worst velocity excess {worst_vel:.2e} rad/s")
    assert ok


def test_criterion_3_rigid_attachment(grasp, plans, scene_plans):
    worst = 0.0
    results = plans["waypoint"] + plans["joint-acc"] + [scene_plans["obstacle"]]
    for r in results:
        for q, pose in zip(r.dense.steps, r.object_path):
            oracle = fk_transform(grasp.hand, grasp.thumb, q) @ grasp.thumb_to_object
            worst = max(worst, float(np.abs(pose.matrix() - oracle).max()))
    ok = worst <= 1e-12
    record_criterion(3, ok, f"max deviation {worst:.1e} over {len(results)} dense paths")
    assert ok


def test_criterion_4_regression_goals(plans):
    res = plans["waypoint"]
    pos = [1000 * r.position_error for r in res]
    ori = [r.orientation_error for r in res]
    ok = max(pos) <= 2.0 and max(ori) <= 2.0 and max(plans["times"]) < 10.0 \
        and all(r.report.converged for r in res)
    record_criterion(4, ok, f"worst position error {max(pos):.3f} mm, worst orientation error "
                     f"{max(ori):.3f} %, slowest plan {max(plans['times']):.2f} s")
    assert ok


def test_criterion_5_obstacle_scene(grasp, scene_plans):
    goal = scene_plans["goal"]
    scene = load_fixture_scene("obstacle")
    obs = scene_plans["obstacle"]
    min_sd = min(min(scene_min_signed_distance(scene, p)) for p in obs.object_path)
    free, far = scene_plans["none"], scene_plans["distant"]
    free_ok = free.position_error <= 0.002 and free.orientation_error <= 2.0
    identical = (np.array_equal(free.coarse.steps, far.coarse.steps)
                 and free.report.final_cost == far.report.final_cost)
    ok = min_sd >= 0.0 and obs.position_error <= 0.005 and free_ok and identical
    record_criterion(5, ok, f"min dense SD {1000 * min_sd:.3f} mm, obstacle error "
                     f"{1000 * obs.position_error:.2f} mm, scene-free error "
                     f"{1000 * free.position_error:.3f} mm, distant plan bit-identical: {identical}")
    assert ok


def test_criterion_6_smoothness(plans):
    """Second differences padded with rest at both ends, as the acceleration term defines them."""
    def roughness(r):
        return joint_acceleration_cost(r.coarse.steps, 1.0)[0]

    wins = sum(roughness(b) < roughness(a) for a, b in zip(plans["waypoint"], plans["joint-acc"]))
    ok = wins >= 8
    record_criterion(6, ok, f"joint-acc mode smoother on {wins}/10 goals")
    assert ok


def test_criterion_7_feedback(grasp, goals, plans):
    sl = grasp.hand.finger_slice(grasp.thumb)
    mask = np.ones(grasp.hand.dof, dtype=bool)
    mask[sl] = False
    better, others_exact, medians = 0, True, []
    for gi, (goal, res) in enumerate(zip(goals, plans["waypoint"])):
        open_err, fb_err = [], []
        for t in range(N_TRIALS):
            dist = DisturbanceModel(seed=1000 * gi + t)
            open_err.append(compute_metrics(simulate(res, grasp, dist), grasp.object_pose,
                                            goal).position_error_cm)
            trace = simulate(res, grasp, dist, FeedbackConfig())
            others_exact &= bool(np.array_equal(trace.commanded[:, mask], res.dense.steps[:, mask]))
            fb_err.append(compute_metrics(trace, grasp.object_pose, goal).position_error_cm)
        medians.append((np.median(open_err), np.median(fb_err)))
        better += medians[-1][1] <= medians[-1][0]
    ok = better == len(goals) and others_exact
    ratio = max(f / o for o, f in medians)
    record_criterion(7, ok, f"feedback median <= open-loop median on {better}/{len(goals)} goals "
                     f"(worst ratio {ratio:.2f}), non-thumb commands exact: {others_exact}")
    assert ok


def test_criterion_8_metric_and_gjk():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(10_000, 4))
    p = rng.normal(size=(10_000, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    metric_ok = True
    for a, b in zip(q, p):
        e = orientation_error_pct(a, b)
        metric_ok &= (0.0 <= e <= 100.0 + 1e-12
                      and abs(e - orientation_error_pct(b, a)) <= 1e-12
                      and abs(e - orientation_error_pct(a, -b)) <= 1e-12
                      and orientation_error_pct(a, a) == 0.0
                      and orientation_error_pct(a, -a) == 0.0)
    worst = 0.0
    for _ in range(1000):
        c1, c2 = rng.uniform(-0.1, 0.1, (2, 3))
        r1, r2 = rng.uniform(0.005, 0.08, 2)
        T1, T2 = np.eye(4), np.eye(4)
        T1[:3, 3], T2[:3, 3] = c1, c2
        exact = np.linalg.norm(c1 - c2) - r1 - r2
        worst = max(worst, abs(signed_distance(Sphere(r1, T1), Sphere(r2, T2)) - exact))
    ok = bool(metric_ok) and worst < 1e-9
    record_criterion(8, ok, f"metric properties hold on 10^4 pairs: {bool(metric_ok)}, "
                     f"sphere-pair max |error| {worst:.1e}")
    assert ok


def test_criterion_9_evaluate_determinism(tmp_path, capsys):
    outs = [tmp_path / "run1.tsv", tmp_path / "run2.tsv"]
    codes = [main(["evaluate", "--trials", "3", "--feedback", "--seed", "5", "--out", str(o)])
             for o in outs]
    capsys.readouterr()
    same = outs[0].read_bytes() == outs[1].read_bytes()
    ok = same and codes == [0, 0]
    record_criterion(9, ok, f"two evaluate runs byte-identical: {same} "
                     f"({len(outs[0].read_bytes())} bytes), exit codes {codes}")
    assert ok
