"""Contrast the two trajectory modes on the bundled regression goals.

Roughness is the sum of squared second differences with the hand at rest
before and after the motion. Run with ``python3 demos/smoothness_modes.py``.
"""
from ingrasp import JOINT_ACC, PlannerConfig, load_fixture_grasp, load_regression_goals, plan
from ingrasp.costs import joint_acceleration_cost


def main():
    grasp = load_fixture_grasp()
    print("goal  waypoint   joint-acc  error(mm)")
    for i, goal in enumerate(load_regression_goals()):
        a = plan(grasp, goal)
        b = plan(grasp, goal, PlannerConfig(mode=JOINT_ACC))
        ra = joint_acceleration_cost(a.coarse.steps, 1.0)[0]
        rb = joint_acceleration_cost(b.coarse.steps, 1.0)[0]
        print(f"{i:>4}  {ra:.2e}   {rb:.2e}   {1000 * b.position_error:.2f}")


if __name__ == "__main__":
    main()
