"""Convex shapes and signed distance via GJK / EPA.

Every shape is a convex *core* (a point, a box or a vertex hull) swept by a
spherical *margin*. Spheres are a point core with margin equal to the radius,
which keeps GJK finite and exact for them: the core distance is found on a
polytope and the margins are subtracted afterwards. Penetration of the cores
themselves is measured with EPA.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelError, NumericalFailure
from .transforms import Pose, xyz_rpy_to_transform

GJK_MAX_ITER = 256
EPA_MAX_ITER = 128
EPA_TOL = 1e-8
_PERTURB = 1e-10


class ConvexShape:
    """Base class; ``pose`` is a 4x4 transform placing the shape in its scene frame."""

    kind = "abstract"
    margin = 0.0

    def __init__(self, pose=None):
        T = np.eye(4) if pose is None else np.array(pose, dtype=float)
        if T.shape != (4, 4):
            raise ModelError("shape pose must be a 4x4 transform")
        self.pose = T
        self._R = T[:3, :3]
        self._p = T[:3, 3]

    @property
    def center(self) -> np.ndarray:
        return self._p

    def core_support(self, direction) -> np.ndarray:
        raise NotImplementedError

    def support(self, direction) -> np.ndarray:
        """Farthest point of the full shape along a unit ``direction``."""
        d = np.asarray(direction, dtype=float)
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise ValueError("support direction must be non-zero")
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"support direction must be unit length (norm {n:.6g})")
        return self.core_support(d) + self.margin * d

    def bounding_radius(self) -> float:
        """Radius of a sphere about ``center`` that encloses the shape."""
        raise NotImplementedError

    def placed(self, T) -> ConvexShape:
        """Copy of the shape moved by the rigid transform ``T``."""
        raise NotImplementedError


class Sphere(ConvexShape):
    kind = "sphere"

    def __init__(self, radius, pose=None):
        super().__init__(pose)
        self.radius = float(radius)
        if not self.radius > 0:
            raise ModelError(f"sphere radius must be positive, got {radius}")
        self.margin = self.radius

    def core_support(self, direction):
        return self._p

    def bounding_radius(self):
        return self.radius

    def placed(self, T):
        return Sphere(self.radius, np.asarray(T) @ self.pose)

    def __repr__(self):
        return f"Sphere(r={self.radius:g}, at={np.round(self._p, 6).tolist()})"


class Box(ConvexShape):
    kind = "box"

    def __init__(self, half_extents, pose=None):
        super().__init__(pose)
        self.half_extents = np.array(half_extents, dtype=float).reshape(3)
        if not np.all(self.half_extents > 0):
            raise ModelError(f"box half extents must be positive, got {self.half_extents}")

    def core_support(self, direction):
        local = self._R.T @ direction
        return self._p + self._R @ np.where(local >= 0.0, self.half_extents, -self.half_extents)

    def bounding_radius(self):
        return float(np.linalg.norm(self.half_extents))

    def placed(self, T):
        return Box(self.half_extents, np.asarray(T) @ self.pose)

    def __repr__(self):
        return f"Box(half={self.half_extents.tolist()}, at={np.round(self._p, 6).tolist()})"


class Hull(ConvexShape):
    """Convex hull of a vertex cloud (vertices given in the shape frame)."""

    kind = "hull"

    def __init__(self, vertices, pose=None):
        super().__init__(pose)
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 4:
            raise ModelError("hull needs at least 4 vertices in 3D")
        spread = v - v.mean(axis=0)
        sv = np.linalg.svd(spread, compute_uv=False)
        if sv[-1] <= 1e-9 * max(sv[0], 1e-12):
            raise ModelError("hull vertices are coplanar")
        self.vertices = v
        self._world = v @ self._R.T + self._p
        self._radius = float(np.linalg.norm(self._world - self._p, axis=1).max())

    def core_support(self, direction):
        return self._world[int(np.argmax(self._world @ direction))]

    def bounding_radius(self):
        return self._radius

    def placed(self, T):
        return Hull(self.vertices, np.asarray(T) @ self.pose)

    def __repr__(self):
        return f"Hull({len(self.vertices)} vertices, at={np.round(self._p, 6).tolist()})"


@dataclass
class ConvexScene:
    """Grasped-object pieces (object frame) and obstacles (palm/world frame)."""

    object_pieces: list
    obstacles: list

    def __post_init__(self):
        self.object_pieces = list(self.object_pieces)
        self.obstacles = list(self.obstacles)
        if not self.object_pieces or not self.obstacles:
            raise ModelError("scene needs at least one object piece and one obstacle")


@dataclass(frozen=True)
class DistanceResult:
    """Signed distance plus witness data.

    ``normal`` points from ``b`` towards ``a``; ``point_a``/``point_b`` are the
    closest points on the two cores (only meaningful when ``cores_disjoint``).
    """

    distance: float
    normal: np.ndarray
    point_a: np.ndarray
    point_b: np.ndarray
    cores_disjoint: bool


# ---------------------------------------------------------------- simplex


def _closest_segment(a, b):
    ab = b - a
    denom = ab @ ab
    if denom <= 0.0:
        return np.array([1.0, 0.0])
    t = -(a @ ab) / denom
    t = min(1.0, max(0.0, t))
    return np.array([1.0 - t, t])


def _closest_triangle(a, b, c):
    """Barycentric weights of the point of triangle ``abc`` closest to the origin."""
    ab = b - a
    ac = c - a
    d1 = -(ab @ a)
    d2 = -(ac @ a)
    if d1 <= 0.0 and d2 <= 0.0:
        return np.array([1.0, 0.0, 0.0])
    d3 = -(ab @ b)
    d4 = -(ac @ b)
    if d3 >= 0.0 and d4 <= d3:
        return np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return np.array([1.0 - v, v, 0.0])
    d5 = -(ab @ c)
    d6 = -(ac @ c)
    if d6 >= 0.0 and d5 <= d6:
        return np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return np.array([1.0 - w, 0.0, w])
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.array([0.0, 1.0 - w, w])
    s = va + vb + vc
    if abs(s) < 1e-300:
        # collinear vertices: best of the three edges
        best = None
        for i, j in ((0, 1), (0, 2), (1, 2)):
            pts = (a, b, c)
            lam = _closest_segment(pts[i], pts[j])
            p = lam[0] * pts[i] + lam[1] * pts[j]
            if best is None or p @ p < best[0]:
                w = np.zeros(3)
                w[i], w[j] = lam
                best = (p @ p, w)
        return best[1]
    v = vb / s
    w = vc / s
    return np.array([1.0 - v - w, v, w])


_TET_FACES = ((0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 3, 1), (1, 2, 3, 0))


def _closest_simplex(W):
    """Closest point of conv(W) to the origin.

    Returns ``(point, weights)`` with weights over the rows of ``W``; a
    tetrahedron that contains the origin returns the zero vector.
    """
    k = len(W)
    if k == 1:
        return W[0].copy(), np.array([1.0])
    if k == 2:
        lam = _closest_segment(W[0], W[1])
        return lam @ W, lam
    if k == 3:
        lam = _closest_triangle(W[0], W[1], W[2])
        return lam @ W, lam
    best = None
    vol = np.linalg.det(W[1:] - W[0])
    scale = max(np.abs(W).max(), 1e-300) ** 3
    inside = True
    for i, j, l, opp in _TET_FACES:
        a, b, c = W[i], W[j], W[l]
        n = np.cross(b - a, c - a)
        s_origin = -(n @ a)
        s_opp = n @ (W[opp] - a)
        if abs(vol) > 1e-14 * scale and s_origin * s_opp >= 0.0:
            continue
        inside = False
        lam3 = _closest_triangle(a, b, c)
        p = lam3[0] * a + lam3[1] * b + lam3[2] * c
        if best is None or p @ p < best[0] @ best[0]:
            lam = np.zeros(4)
            lam[[i, j, l]] = lam3
            best = (p, lam)
    if inside:
        return np.zeros(3), np.full(4, 0.25)
    return best


# ---------------------------------------------------------------- GJK / EPA


def _md_support(a: ConvexShape, b: ConvexShape, d):
    pa = a.core_support(d)
    pb = b.core_support(-d)
    return pa - pb, pa, pb


def _gjk(a: ConvexShape, b: ConvexShape):
    """Distance between the cores of ``a`` and ``b``.

    Returns ``(distance, point_a, point_b, simplex)`` where ``simplex`` is a list
    of ``(w, pa, pb)`` support triples; distance 0 means the cores touch or
    overlap.
    """
    d = b.center - a.center
    if d @ d < 1e-24:
        d = np.array([1.0, 0.0, 0.0])
    w, pa, pb = _md_support(a, b, -d / np.linalg.norm(d))
    simplex = [(w, pa, pb)]
    v = w.copy()
    lam = np.array([1.0])
    scale = max(1.0, float(np.abs(w).max()))
    for _ in range(GJK_MAX_ITER):
        vv = v @ v
        if vv <= (1e-14 * scale) ** 2:
            return 0.0, None, None, simplex
        direction = -v / np.sqrt(vv)
        w, pa, pb = _md_support(a, b, direction)
        if vv - v @ w <= 1e-13 * vv or any(np.array_equal(w, s[0]) for s in simplex):
            break
        trial = simplex + [(w, pa, pb)]
        W = np.array([s[0] for s in trial])
        v_new, lam_new = _closest_simplex(W)
        if not np.all(np.isfinite(v_new)):
            # degenerate simplex; nudge the direction and retry next round
            v = v + _PERTURB * np.array([1.0, -1.0, 1.0])
            continue
        if v_new @ v_new >= vv:
            break
        keep = lam_new > 0.0
        simplex = [s for s, k in zip(trial, keep) if k]
        lam = lam_new[keep]
        v = v_new
        if len(simplex) == 4:
            return 0.0, None, None, simplex
    else:
        raise NumericalFailure("GJK did not terminate within the iteration cap", payload=(a, b))
    pa = sum(l * s[1] for l, s in zip(lam, simplex))
    pb = sum(l * s[2] for l, s in zip(lam, simplex))
    return float(np.sqrt(v @ v)), pa, pb, simplex


def _face(points, i, j, k, interior):
    a, b, c = points[i], points[j], points[k]
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n)
    if nn < 1e-300:
        return None
    n = n / nn
    if n @ (interior - a) > 0.0:
        n = -n
        j, k = k, j
    return [i, j, k, n, float(n @ a)]


def _epa(a: ConvexShape, b: ConvexShape, simplex):
    """Penetration depth of the cores and the separating normal (from b to a)."""
    pts = [s[0] for s in simplex]
    scale = max(1e-12, max(float(np.abs(p).max()) for p in pts))
    eps = 1e-12 * scale
    # grow the terminal simplex to a full tetrahedron
    axes = [np.array(e, dtype=float) for e in
            ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))]
    while len(pts) < 4:
        if len(pts) == 1:
            cands = axes
        elif len(pts) == 2:
            u = pts[1] - pts[0]
            u = u / np.linalg.norm(u)
            e = axes[int(np.argmin(np.abs(u))) * 2]
            p1 = np.cross(u, e)
            p1 /= np.linalg.norm(p1)
            p2 = np.cross(u, p1)
            cands = [p1, -p1, p2, -p2, (p1 + p2) / np.sqrt(2), -(p1 + p2) / np.sqrt(2)]
        else:
            n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
            n = n / np.linalg.norm(n)
            cands = [n, -n]
        added = False
        for d in cands:
            w = _md_support(a, b, d)[0]
            if len(pts) == 1:
                off = np.linalg.norm(w - pts[0])
            elif len(pts) == 2:
                u = pts[1] - pts[0]
                off = np.linalg.norm(np.cross(u / np.linalg.norm(u), w - pts[0]))
            else:
                off = abs(n @ (w - pts[0]))
            if off > eps:
                pts.append(w)
                added = True
                break
        if not added:
            # Minkowski difference is flat: zero translation separates the cores
            return 0.0, _flat_normal(pts)
    interior = sum(pts) / 4.0
    faces = [f for f in (_face(pts, 0, 1, 2, interior), _face(pts, 0, 1, 3, interior),
                         _face(pts, 0, 2, 3, interior), _face(pts, 1, 2, 3, interior)) if f]
    if len(faces) < 4:
        return 0.0, _flat_normal(pts)
    best = min(faces, key=lambda f: f[4])
    for _ in range(EPA_MAX_ITER):
        best = min(faces, key=lambda f: f[4])
        n, dist = best[3], best[4]
        w = _md_support(a, b, n)[0]
        if n @ w - dist < EPA_TOL:
            break
        pts.append(w)
        idx = len(pts) - 1
        visible = [f for f in faces if f[3] @ (w - pts[f[0]]) > eps]
        if not visible:
            break
        edges = {}
        for f in visible:
            for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (min(e), max(e))
                edges[key] = None if key in edges else e
        faces = [f for f in faces if not any(f is v for v in visible)]
        for e in edges.values():
            if e is None:
                continue
            nf = _face(pts, e[0], e[1], idx, interior)
            if nf is not None:
                faces.append(nf)
    # the MD normal points out of A - B; A must move along -n to separate
    return max(best[4], 0.0), -best[3]


def _flat_normal(pts):
    P = np.array(pts) - pts[0]
    _, _, vt = np.linalg.svd(P)
    return vt[-1]


def distance_query(a: ConvexShape, b: ConvexShape) -> DistanceResult:
    """Signed distance with witness information (negative means penetration)."""
    dist, pa, pb, simplex = _gjk(a, b)
    margins = a.margin + b.margin
    if dist > 0.0:
        n = (pa - pb) / dist
        return DistanceResult(dist - margins, n, pa, pb, True)
    depth, n = _epa(a, b, simplex)
    return DistanceResult(-depth - margins, n, None, None, False)


def signed_distance(a: ConvexShape, b: ConvexShape) -> float:
    """Separation distance of two convex shapes; negative penetration depth if they overlap."""
    return distance_query(a, b).distance


def place_pieces(pieces, object_pose) -> list:
    T = object_pose.matrix() if isinstance(object_pose, Pose) else np.asarray(object_pose)
    return [p.placed(T) for p in pieces]


def scene_min_signed_distance(scene: ConvexScene, object_pose) -> list:
    """Per-obstacle minimum over object pieces of the signed distance."""
    placed = place_pieces(scene.object_pieces, object_pose)
    return [min(signed_distance(p, w) for p in placed) for w in scene.obstacles]


# ---------------------------------------------------------------- documents


def shape_from_dict(d: dict) -> ConvexShape:
    kind = d.get("type")
    try:
        pose = xyz_rpy_to_transform(d.get("pose_xyz", [0, 0, 0]), d.get("pose_rpy", [0, 0, 0]))
        if kind == "sphere":
            return Sphere(float(d["radius"]), pose)
        if kind == "box":
            return Box(d["half_extents"], pose)
        if kind == "hull":
            return Hull(d["vertices"], pose)
    except KeyError as exc:
        raise ModelError(f"{kind} shape missing field {exc.args[0]!r}") from None
    raise ModelError(f"unknown shape type {kind!r}; expected sphere, box or hull")


def shape_to_dict(s: ConvexShape) -> dict:
    from .transforms import matrix_to_rpy

    out = {"type": s.kind}
    if isinstance(s, Sphere):
        out["radius"] = s.radius
    elif isinstance(s, Box):
        out["half_extents"] = s.half_extents.tolist()
    else:
        out["vertices"] = s.vertices.tolist()
    out["pose_xyz"] = s.pose[:3, 3].tolist()
    out["pose_rpy"] = matrix_to_rpy(s.pose[:3, :3]).tolist()
    return out


def parse_scene(doc: dict) -> ConvexScene:
    if not isinstance(doc, dict):
        raise ModelError("scene document must be a mapping")
    for key in ("object_pieces", "obstacles"):
        if not isinstance(doc.get(key), list):
            raise ModelError(f"scene missing list field {key!r}")
    return ConvexScene([shape_from_dict(d) for d in doc["object_pieces"]],
                       [shape_from_dict(d) for d in doc["obstacles"]])


def load_scene(source) -> ConvexScene:
    if isinstance(source, dict):
        return parse_scene(source)
    try:
        doc = json.loads(Path(source).read_text())
    except OSError as exc:
        raise ModelError(f"cannot read scene {source}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"scene is not valid JSON: {exc}") from None
    return parse_scene(doc)


def scene_to_dict(scene: ConvexScene) -> dict:
    return {"object_pieces": [shape_to_dict(s) for s in scene.object_pieces],
            "obstacles": [shape_to_dict(s) for s in scene.obstacles]}
