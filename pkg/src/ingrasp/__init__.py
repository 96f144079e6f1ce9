"""Planning and executing in-grasp object manipulation with a multi-fingered hand.

The grasped object is assumed rigidly attached to the thumb tip. A joint
trajectory is optimised so the object reaches a goal pose while the other
fingertips keep their placement relative to the thumb, joint limits and
speed bounds hold, and the object stays clear of obstacles.
"""
from .costs import JOINT_ACC, MODES, WAYPOINT_INTERP, CostWeights, GraspSpec, PlanProblem, total_cost
from .errors import DegenerateDirectionError, ModelError, NumericalFailure
from .feedback import FeedbackConfig, feedback_command
from .fixtures import load_fixture_grasp, load_fixture_hand, load_fixture_scene, load_regression_goals
from .geometry import Box, ConvexScene, Hull, Sphere, distance_query, signed_distance
from .kinematics import HandModel, fk_pose, jacobian, load_hand_model
from .optimizer import SolverConfig, SolveReport, Trajectory
from .planner import PlannerConfig, PlanResult, load_grasp_spec, plan
from .simulator import DisturbanceModel, ExecutionTrace, Metrics, compute_metrics, simulate
from .transforms import Pose

__version__ = "0.1.0"

__all__ = [
    "Box", "ConvexScene", "CostWeights", "DegenerateDirectionError", "DisturbanceModel",
    "ExecutionTrace", "FeedbackConfig", "GraspSpec", "HandModel", "Hull", "JOINT_ACC", "MODES",
    "Metrics", "ModelError", "NumericalFailure", "PlanProblem", "PlanResult", "PlannerConfig",
    "Pose", "SolveReport", "SolverConfig", "Sphere", "Trajectory", "WAYPOINT_INTERP",
    "compute_metrics", "distance_query", "feedback_command", "fk_pose", "jacobian",
    "load_fixture_grasp", "load_fixture_hand", "load_fixture_scene", "load_grasp_spec",
    "load_hand_model", "load_regression_goals", "plan", "signed_distance", "simulate",
    "total_cost",
]
