"""Command-line entry points: ``plan``, ``simulate``, ``evaluate`` and ``gradcheck``.

Every command echoes its fully resolved configuration, and its outputs
depend only on its flags and seeds. Exit codes: 0 success, 1 input error,
2 a plan did not converge, 3 the gradient audit failed.

Without ``--hand``/``--grasp`` the bundled fixture hand and grasp are used.
``--scene`` takes a scene file or the name of a bundled scene.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .costs import MODES, WAYPOINT_INTERP, GraspSpec
from .errors import ModelError
from .feedback import FeedbackConfig
from .fixtures import SCENES, fixture_path, load_fixture_scene
from .geometry import load_scene
from .kinematics import load_hand_model
from .optimizer import SolveReport, Trajectory
from .planner import (
    PlannerConfig,
    PlanResult,
    load_grasp_spec,
    orientation_error_pct,
    plan,
    plan_to_dict,
    predicted_object_path,
)
from .simulator import DisturbanceModel, compute_metrics, metrics_to_dict, simulate, trace_to_table
from .transforms import Pose

__all__ = ["main", "build_parser", "cmd_plan", "cmd_simulate", "cmd_evaluate", "cmd_gradcheck",
           "EXIT_OK", "EXIT_INPUT", "EXIT_NOT_CONVERGED", "EXIT_AUDIT"]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_AUDIT = 3
GOAL_FRAMES = ("relative", "absolute")
# seeds of trial t on goal g are seed + SEED_STRIDE * g + t
SEED_STRIDE = 1000


class InputError(Exception):
    """Bad flags or unreadable inputs; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# ------------------------------------------------------------------ inputs


def _parse_goal(text: str, grasp: GraspSpec, frame: str) -> Pose:
    """``"x y z roll pitch yaw"``: an offset from the initial object pose, or an absolute pose."""
    try:
        vals = np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError:
        raise InputError(f"--goal must be six numbers, got {text!r}") from None
    if vals.shape != (6,) or not np.all(np.isfinite(vals)):
        raise InputError(f"--goal must be six finite numbers, got {text!r}")
    delta = Pose.from_xyz_rpy(vals[:3], vals[3:])
    if frame == "absolute":
        return delta
    X0 = grasp.object_pose
    return Pose.from_matrix(np.block([
        [delta.rotation @ X0.rotation, (X0.position + delta.position)[:, None]],
        [np.zeros((1, 3)), np.ones((1, 1))]]))


def _load_inputs(args):
    """Hand, grasp, scene and the paths they came from."""
    hand_path = Path(args.hand) if args.hand else None
    grasp_path = Path(args.grasp) if args.grasp else fixture_path("synthetic_grasp.json")
    if hand_path is None and not args.grasp:
        hand_path = fixture_path("synthetic_hand.json")
    hand = load_hand_model(hand_path) if hand_path is not None else None
    grasp = load_grasp_spec(grasp_path, hand=hand)
    scene = None
    scene_src = getattr(args, "scene", None)
    if scene_src:
        scene = load_fixture_scene(scene_src) if scene_src in SCENES else load_scene(scene_src)
    paths = {"hand": str(hand_path) if hand_path is not None else "(from grasp)",
             "grasp": str(grasp_path), "scene": scene_src}
    return grasp, scene, paths


def _planner_config(args, scene) -> PlannerConfig:
    return PlannerConfig(T=args.T, v_max=args.v_max, mode=args.mode, scene=scene)


def _disturbance(args, seed) -> DisturbanceModel:
    if args.disturbance == "none":
        return DisturbanceModel.none(seed)
    return DisturbanceModel(seed=seed)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def _deterministic_plan_doc(result, config, goal, extra):
    doc = plan_to_dict(result, config, goal, extra)
    doc["report"].pop("wall_time", None)
    return doc


def _echo(config: dict, out=None):
    print("config " + json.dumps(config, sort_keys=True), file=out or sys.stdout)


def _summary(report: SolveReport, result: PlanResult) -> str:
    return (f"{report.message}: iterations={report.iterations} cost={report.final_cost:.6e} "
            f"violation={report.max_constraint_violation:.2e} "
            f"position_error_mm={1000 * result.position_error:.4f} "
            f"orientation_error_pct={result.orientation_error:.4f} "
            f"time={report.wall_time:.2f}s")


def _write(path, text):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_text(text)


def _plan_from_doc(doc: dict, grasp: GraspSpec) -> tuple:
    """Rebuild a plan (and its goal) from a plan document for ``grasp``."""
    try:
        coarse = Trajectory(np.array(doc["coarse"]["steps"], dtype=float), doc["coarse"]["dt"])
        dense = Trajectory(np.array(doc["dense"]["steps"], dtype=float), doc["dense"]["dt"])
        g = doc["goal"]
        goal = Pose(np.array(g["xyz"], dtype=float), np.array(g["quat_wxyz"], dtype=float))
        report = SolveReport(wall_time=0.0, **doc["report"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"plan document is malformed: {exc}") from None
    n = grasp.hand.dof
    if coarse.n_dof != n or dense.n_dof != n:
        raise InputError(f"plan has {dense.n_dof} dof but the hand has {n}")
    path = predicted_object_path(dense, grasp)
    final = path[-1]
    result = PlanResult(coarse, dense, path, report,
                        float(np.linalg.norm(final.position - goal.position)),
                        orientation_error_pct(goal.orientation, final.orientation))
    return result, goal


# ------------------------------------------------------------------ commands


def cmd_plan(args) -> int:
    grasp, scene, paths = _load_inputs(args)
    goal = _parse_goal(args.goal, grasp, args.goal_frame)
    config = _planner_config(args, scene)
    echo = {"command": "plan", **paths, "goal": goal.to_dict(), "goal_input": args.goal,
            "goal_frame": args.goal_frame, "planner": config.to_dict()}
    _echo(echo)
    result = plan(grasp, goal, config)
    print(_summary(result.report, result))
    if result.collision_audit_failed:
        print(f"warning: dense path penetrates the scene (min SD {result.min_scene_distance:.3e})")
    if args.out:
        _write(args.out, _dumps(_deterministic_plan_doc(result, config, goal, {"echo": echo})))
    return EXIT_OK if result.report.converged else EXIT_NOT_CONVERGED


def cmd_simulate(args) -> int:
    grasp, scene, paths = _load_inputs(args)
    config = _planner_config(args, scene)
    if args.plan:
        try:
            doc = json.loads(Path(args.plan).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read plan {args.plan}: {exc}") from None
        result, goal = _plan_from_doc(doc, grasp)
    else:
        if not args.goal:
            raise InputError("simulate needs --goal or --plan")
        goal = _parse_goal(args.goal, grasp, args.goal_frame)
        result = None
    disturbance = _disturbance(args, args.seed)
    fb = FeedbackConfig() if args.feedback else None
    echo = {"command": "simulate", **paths, "plan_file": args.plan, "goal": goal.to_dict(),
            "planner": config.to_dict(), "disturbance": asdict(disturbance),
            "feedback": asdict(fb) if fb else None}
    _echo(echo)
    if result is None:
        result = plan(grasp, goal, config)
        print(_summary(result.report, result))
    trace = simulate(result, grasp, disturbance, fb)
    metrics = compute_metrics(trace, grasp.object_pose, goal)
    doc = {
        "echo": echo,
        "predicted": {"position_error_cm": 100.0 * result.position_error,
                      "orientation_error_pct": result.orientation_error},
        "realized": metrics_to_dict(metrics),
        "plan_converged": result.report.converged,
    }
    print(f"realized position_error_cm={metrics.position_error_cm:.4f} "
          f"orientation_error_pct={metrics.orientation_error_pct:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(_dumps(doc))
        (out / "trace.tsv").write_text(trace_to_table(trace))
    return EXIT_OK if result.report.converged else EXIT_NOT_CONVERGED


def _load_goals(args, grasp):
    if args.goals:
        try:
            doc = json.loads(Path(args.goals).read_text())
            entries = doc["goals"]
            goals = [Pose.from_xyz_rpy(np.array(g["xyz"], dtype=float).reshape(3),
                                       np.array(g["rpy"], dtype=float).reshape(3))
                     for g in entries]
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"cannot read goals {args.goals}: {exc}") from None
    elif args.goal:
        goals = [_parse_goal(g, grasp, args.goal_frame) for g in args.goal]
    else:
        from .fixtures import load_regression_goals
        goals = load_regression_goals()
    if not goals:
        raise InputError("no goals to evaluate")
    return goals


def _quantiles(values) -> dict:
    v = np.asarray(values, dtype=float)
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return dict(zip(("min", "q1", "median", "q3", "max"), q.tolist()))


def evaluate_table(grasp, goals, config, trials, seed, feedback, disturbance_kind="default"):
    """Plan every goal once, then run seeded disturbed executions of each plan.

    Returns the table text and whether every plan converged. Rows are ordered
    by goal, trial and controller.
    """
    controllers = ["open-loop"] + (["feedback"] if feedback else [])
    head = ["goal", "trial", "seed", "controller", "converged", "pos_err_cm", "pos_err_pct",
            "orient_err_pct"]
    rows = []
    stats = {c: {"pos_err_cm": [], "pos_err_pct": [], "orient_err_pct": []} for c in controllers}
    all_converged = True
    for gi, goal in enumerate(goals):
        result = plan(grasp, goal, config)
        all_converged &= result.report.converged
        for t in range(trials):
            s = seed + SEED_STRIDE * gi + t
            dist = DisturbanceModel.none(s) if disturbance_kind == "none" else DisturbanceModel(seed=s)
            for c in controllers:
                fb = FeedbackConfig() if c == "feedback" else None
                m = compute_metrics(simulate(result, grasp, dist, fb), grasp.object_pose, goal)
                pct = m.position_error_pct
                rows.append([str(gi), str(t), str(s), c, str(int(result.report.converged)),
                             f"{m.position_error_cm:.6f}",
                             "nan" if pct is None else f"{pct:.6f}",
                             f"{m.orientation_error_pct:.6f}"])
                stats[c]["pos_err_cm"].append(m.position_error_cm)
                if pct is not None:
                    stats[c]["pos_err_pct"].append(pct)
                stats[c]["orient_err_pct"].append(m.orientation_error_pct)
    lines = ["\t".join(head)] + ["\t".join(r) for r in rows]
    lines += ["", "# aggregate", "\t".join(["controller", "metric", "min", "q1", "median", "q3",
                                             "max"])]
    for c in controllers:
        for metric, vals in stats[c].items():
            if not vals:
                continue
            q = _quantiles(vals)
            lines.append("\t".join([c, metric] + [f"{q[k]:.6f}" for k in
                                                  ("min", "q1", "median", "q3", "max")]))
    return "\n".join(lines) + "\n", all_converged


def cmd_evaluate(args) -> int:
    if args.trials < 1:
        raise InputError("--trials must be at least 1")
    grasp, scene, paths = _load_inputs(args)
    goals = _load_goals(args, grasp)
    config = _planner_config(args, scene)
    echo = {"command": "evaluate", **paths, "goals": [g.to_dict() for g in goals],
            "trials": args.trials, "seed": args.seed, "seed_stride": SEED_STRIDE,
            "planner": config.to_dict(), "disturbance": args.disturbance,
            "default_disturbance": asdict(DisturbanceModel()),
            "feedback": asdict(FeedbackConfig()) if args.feedback else None}
    table, converged = evaluate_table(grasp, goals, config, args.trials, args.seed,
                                      args.feedback, args.disturbance)
    text = "# config " + json.dumps(echo, sort_keys=True) + "\n" + table
    if args.out:
        _write(args.out, text)
        _echo(echo)
        print(table.split("# aggregate\n", 1)[1], end="")
    else:
        sys.stdout.write(text)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_gradcheck(args) -> int:
    from .gradcheck import TERMS, audit_gradients

    grasp, _, paths = _load_inputs(args)
    terms = args.terms.split(",") if args.terms else list(TERMS)
    for t in terms + ([args.corrupt] if args.corrupt else []):
        if t not in TERMS:
            raise InputError(f"unknown cost term {t!r}; choose from {', '.join(TERMS)}")
    echo = {"command": "gradcheck", **paths, "seed": args.seed, "samples": args.samples,
            "terms": terms, "tolerance": args.tol, "corrupt": args.corrupt}
    _echo(echo)
    report = audit_gradients(grasp, n_samples=args.samples, seed=args.seed, tol=args.tol,
                             terms=terms, corrupt=args.corrupt)
    print(report.table())
    if args.out:
        _write(args.out, report.table() + "\n")
    for a in report.failures:
        print(f"gradient audit failed: term={a.term} seed={args.seed} sample={a.worst_seed} "
              f"relative_error={a.max_error:.3e}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_AUDIT


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ingrasp", description="In-grasp object manipulation planning toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scene=True, planning=True):
        sp.add_argument("--hand", help="hand model JSON (default: bundled or from the grasp)")
        sp.add_argument("--grasp", help="grasp spec JSON (default: bundled fixture grasp)")
        sp.add_argument("--out", help="output path")
        if scene:
            sp.add_argument("--scene", help=f"scene JSON or one of {', '.join(SCENES)}")
        if planning:
            sp.add_argument("--mode", choices=MODES, default=WAYPOINT_INTERP)
            sp.add_argument("--T", type=int, default=10, help="coarse time steps")
            sp.add_argument("--v-max", type=float, default=0.6, help="joint speed bound (rad/s)")
            sp.add_argument("--goal-frame", choices=GOAL_FRAMES, default="relative",
                            help="whether --goal offsets the initial object pose or is absolute")

    sp = sub.add_parser("plan", help="plan a trajectory to one goal")
    common(sp)
    sp.add_argument("--goal", required=True, help='"x y z roll pitch yaw" (m, rad)')
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("simulate", help="execute a plan under disturbances")
    common(sp)
    sp.add_argument("--goal", help='"x y z roll pitch yaw" (m, rad)')
    sp.add_argument("--plan", help="plan document written by the plan command")
    sp.add_argument("--feedback", action="store_true", help="close the loop on the thumb")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--disturbance", choices=("default", "none"), default="default")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("evaluate", help="seeded batch of disturbed executions")
    common(sp)
    sp.add_argument("--goal", action="append", help="goal (repeatable); default: bundled goals")
    sp.add_argument("--goals", help="JSON file with a 'goals' list of {xyz, rpy}")
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--feedback", action="store_true",
                    help="also run every trial with thumb feedback")
    sp.add_argument("--disturbance", choices=("default", "none"), default="default")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("gradcheck", help="finite-difference audit of the cost gradients")
    common(sp, scene=False, planning=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--terms", help="comma-separated subset of terms")
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--corrupt", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (ModelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
