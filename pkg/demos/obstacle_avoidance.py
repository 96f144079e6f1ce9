"""Compare a plan with and without a box obstacle in the object's path.

Run with ``python3 demos/obstacle_avoidance.py``.
"""
import numpy as np

from ingrasp import PlannerConfig, Pose, load_fixture_grasp, load_fixture_scene, plan
from ingrasp.geometry import scene_min_signed_distance


def clearance(result, scene):
    return min(min(scene_min_signed_distance(scene, p)) for p in result.object_path)


def main():
    grasp = load_fixture_grasp()
    start = grasp.object_pose
    goal = Pose(start.position + np.array([0.02, 0.0, 0.0]), start.orientation)
    scene = load_fixture_scene("obstacle")

    free = plan(grasp, goal)
    avoid = plan(grasp, goal, PlannerConfig(scene=scene))
    for label, r in (("scene-free", free), ("with obstacle", avoid)):
        print(f"{label:>13}: clearance {1000 * clearance(r, scene):+.2f} mm, "
              f"goal error {1000 * r.position_error:.2f} mm")


if __name__ == "__main__":
    main()
