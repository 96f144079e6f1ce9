import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ingrasp.errors import ModelError
from ingrasp.geometry import (
    Box,
    ConvexScene,
    Hull,
    Sphere,
    distance_query,
    load_scene,
    parse_scene,
    scene_min_signed_distance,
    scene_to_dict,
    signed_distance,
)
from ingrasp.transforms import Pose, rotvec_to_matrix, xyz_rpy_to_transform

vec = arrays(np.float64, 3, elements=st.floats(-0.2, 0.2))
rotvec = arrays(np.float64, 3, elements=st.floats(-3, 3))
half = arrays(np.float64, 3, elements=st.floats(0.005, 0.05))


def at(p, rv=(0, 0, 0)):
    T = np.eye(4)
    T[:3, :3] = rotvec_to_matrix(np.asarray(rv, dtype=float))
    T[:3, 3] = p
    return T


def test_support_examples():
    assert np.allclose(Sphere(1.0).support(np.array([1.0, 0, 0])), [1, 0, 0])
    d = np.ones(3) / np.sqrt(3)
    assert np.allclose(Box([1, 2, 3]).support(d), [1, 2, 3])


def test_support_rejects_non_unit_direction():
    with pytest.raises(ValueError):
        Sphere(1.0).support(np.array([2.0, 0, 0]))


def test_hull_support_matches_vertex_scan():
    rng = np.random.default_rng(0)
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    h = Hull(verts, at([0.3, -0.2, 0.5]))
    world = verts + [0.3, -0.2, 0.5]
    for _ in range(200):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        assert np.allclose(h.support(d), world[np.argmax(world @ d)])


def test_shape_validation():
    with pytest.raises(ModelError):
        Sphere(0.0)
    with pytest.raises(ModelError):
        Box([1, 0, 1])
    with pytest.raises(ModelError, match="coplanar"):
        Hull([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])


def test_signed_distance_examples():
    assert signed_distance(Sphere(0.03), Sphere(0.03, at([0.1, 0, 0]))) == pytest.approx(0.04, abs=1e-12)
    assert signed_distance(Sphere(0.03), Sphere(0.03, at([0.04, 0, 0]))) == pytest.approx(-0.02, abs=1e-12)
    assert signed_distance(Box([0.5, 0.5, 0.5]), Box([0.5, 0.5, 0.5], at([1.1, 0, 0]))) == \
        pytest.approx(0.1, abs=1e-12)


@given(vec, st.floats(0.001, 0.1), vec, st.floats(0.001, 0.1))
def test_sphere_pair_analytic(c1, r1, c2, r2):
    if np.linalg.norm(c1 - c2) < 1e-6:
        return
    exact = np.linalg.norm(c1 - c2) - r1 - r2
    assert abs(signed_distance(Sphere(r1, at(c1)), Sphere(r2, at(c2))) - exact) < 1e-9


@given(half, half, vec)
def test_axis_aligned_boxes_match_slab_oracle(h1, h2, c):
    gaps = np.abs(c) - h1 - h2
    if np.all(gaps < 0):
        exact = gaps.max()
    else:
        exact = np.linalg.norm(np.maximum(gaps, 0.0))
    if abs(exact) < 1e-6:
        return
    sd = signed_distance(Box(h1), Box(h2, at(c)))
    assert sd == pytest.approx(exact, abs=1e-9)


@given(half, rotvec, vec, st.floats(0.002, 0.05), vec)
def test_symmetry_and_translation_equivariance(h, rv, c, r, shift):
    a = Box(h, at(np.zeros(3), rv))
    b = Sphere(r, at(c))
    d = signed_distance(a, b)
    assert signed_distance(b, a) == pytest.approx(d, abs=1e-9)
    moved = at(shift)
    assert signed_distance(a.placed(moved), b.placed(moved)) == pytest.approx(d, abs=1e-9)


@given(half, rotvec, half, vec)
def test_sign_agrees_with_intersection_for_polytopes(h1, rv, h2, c):
    res = distance_query(Box(h1, at(np.zeros(3), rv)), Box(h2, at(c)))
    assert res.cores_disjoint == (res.distance > 0)


def test_witness_normal_points_from_b_to_a():
    res = distance_query(Sphere(0.01, at([0.1, 0, 0])), Box([0.02, 0.02, 0.02]))
    assert res.cores_disjoint
    assert np.allclose(res.normal, [1, 0, 0], atol=1e-12)
    assert res.distance == pytest.approx(0.07, abs=1e-12)


def test_scene_min_signed_distance_examples():
    scene = ConvexScene([Sphere(0.01)], [Sphere(0.01, at([0.1, 0, 0]))])
    assert scene_min_signed_distance(scene, Pose())[0] == pytest.approx(0.08, abs=1e-12)
    touching = Pose([0.08, 0, 0])
    assert scene_min_signed_distance(scene, touching)[0] == pytest.approx(0.0, abs=1e-6)


def test_scene_two_obstacles_ordered():
    pieces = [Sphere(0.01), Box([0.01, 0.02, 0.005], at([0.02, 0, 0]))]
    obstacles = [Box([0.05, 0.05, 0.05], at([0, 0, 0.3])), Sphere(0.02, at([0.1, 0.05, 0]))]
    scene = ConvexScene(pieces, obstacles)
    pose = Pose.from_xyz_rpy([0.01, 0.0, 0.02], [0.1, -0.2, 0.3])
    got = scene_min_signed_distance(scene, pose)
    T = pose.matrix()
    for k, obs in enumerate(obstacles):
        assert got[k] == min(signed_distance(p.placed(T), obs) for p in pieces)
    assert got[0] > got[1]


def test_scene_documents(tmp_path):
    scene = ConvexScene([Sphere(0.01)], [Box([0.01, 0.02, 0.03], xyz_rpy_to_transform(
        [0.1, 0, 0], [0, 0, 0.4])), Hull(np.eye(3).tolist() + [[0, 0, 0]])])
    doc = scene_to_dict(scene)
    back = parse_scene(doc)
    assert [s.kind for s in back.obstacles] == ["box", "hull"]
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(doc))
    again = load_scene(path)
    assert len(again.obstacles) == 2
    assert np.allclose(again.obstacles[0].pose, scene.obstacles[0].pose, atol=1e-12)
    with pytest.raises(ModelError, match="unknown shape type"):
        parse_scene({"object_pieces": [{"type": "cone"}], "obstacles": []})
    with pytest.raises(ModelError, match="radius"):
        parse_scene({"object_pieces": [{"type": "sphere"}], "obstacles": []})
