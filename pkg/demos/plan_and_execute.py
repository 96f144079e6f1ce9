"""Plan a 2 cm object translation, then execute it open-loop and with thumb feedback.

Run with ``python3 demos/plan_and_execute.py``.
"""
import numpy as np

from ingrasp import (DisturbanceModel, FeedbackConfig, Pose, compute_metrics,
                     load_fixture_grasp, plan, simulate)


def main():
    grasp = load_fixture_grasp()
    start = grasp.object_pose
    goal = Pose(start.position + np.array([0.02, 0.0, 0.0]), start.orientation)

    result = plan(grasp, goal)
    print(f"planned: converged={result.report.converged} "
          f"iterations={result.report.iterations} "
          f"position error={1000 * result.position_error:.3f} mm")

    # Same disturbance seed for both runs so only the controller differs.
    for label, fb in (("open-loop", None), ("feedback", FeedbackConfig())):
        trace = simulate(result, grasp, DisturbanceModel(seed=7), fb)
        m = compute_metrics(trace, start, goal)
        print(f"{label:>9}: position error {m.position_error_cm:.3f} cm, "
              f"orientation error {m.orientation_error_pct:.2f} %")


if __name__ == "__main__":
    main()
