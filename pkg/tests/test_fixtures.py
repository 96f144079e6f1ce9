import numpy as np
import pytest
from scipy.spatial import cKDTree

from ingrasp.costs import relative_orientation_cost, relative_position_cost
from ingrasp.fixtures import SCENES, load_fixture_scene, load_regression_goals
from ingrasp.planner import orientation_error_pct


@pytest.fixture(scope="module")
def goals_with_witness():
    return load_regression_goals(with_witness=True)


def test_ten_goals(goals_with_witness):
    goals, witness = goals_with_witness
    assert len(goals) == 10 and witness.shape == (10, 16)


def test_witnesses_reach_goals_rigidly(grasp, goals_with_witness):
    """Each witness configuration puts the object on its goal with the grasp shape intact."""
    goals, witness = goals_with_witness
    hand = grasp.hand
    for goal, q in zip(goals, witness):
        assert np.all(q >= hand.lower) and np.all(q <= hand.upper)
        T = grasp.object_transform(q)
        assert np.abs(T - goal.matrix()).max() < 1e-9
        assert relative_position_cost(q, grasp)[0] < 1e-9
        assert relative_orientation_cost(q, grasp)[0] < 1e-6


def test_goal_magnitudes(grasp, goals):
    X0 = grasp.object_pose
    for g in goals:
        d = np.linalg.norm(g.position - X0.position)
        assert 0.01 <= d <= 0.03
        angle = 2 * np.arccos(min(1.0, abs(float(np.dot(g.orientation, X0.orientation)))))
        assert angle <= np.radians(20) + 1e-9
        assert orientation_error_pct(X0.orientation, g.orientation) > 0


def test_goals_inside_sampled_thumb_workspace(grasp, goals):
    """Dense sampling of thumb joints (other fingers at rest) lands near every goal position."""
    hand = grasp.hand
    sl = hand.finger_slice(grasp.thumb)
    rng = np.random.default_rng(0)
    Q = np.tile(grasp.theta0, (100_000, 1))
    Q[:, sl] = rng.uniform(hand.lower[sl], hand.upper[sl], (100_000, sl.stop - sl.start))
    tree = cKDTree(grasp.object_transform(Q)[:, :3, 3])
    for g in goals:
        assert tree.query(g.position)[0] < 0.003
    # an out-of-reach control point is far from every sample
    assert tree.query(grasp.object_pose.position + [0.0, 0.0, 0.2])[0] > 0.05


@pytest.mark.parametrize("name", SCENES)
def test_scenes_load(name):
    scene = load_fixture_scene(name)
    assert len(scene.object_pieces) == 1 and len(scene.obstacles) == 1


def test_unknown_scene():
    with pytest.raises(ValueError):
        load_fixture_scene("kitchen")
