"""Grasped-tool press scenes: sampling, quasi-static press resolution and
penetration-threshold contact labels."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..geom.mesh import TOOL_DIMENSIONS, NormalizationInfo, TriangleMesh, build_tool_mesh, normalize_to_unit_sphere
from ..geom.sampling import QuerySet, sample_surface
from . import frames

DELTA_PEN = 0.0015
GRASP_HEIGHT = 0.025
EE_START_HEIGHT = 0.30
TRAVEL_LIMIT = 0.5

XI_TRANSLATION_RANGE = 0.008
XI_ROTATION_RANGE = np.deg2rad(15.0)
TILT_RANGE = np.deg2rad(20.0)

TABLE_PLANE = np.array([0.0, 0.0, 1.0, 0.0])


class UnreachableSceneError(RuntimeError):
    pass


class InconsistentSceneError(RuntimeError):
    pass


@dataclass(frozen=True)
class ToolAsset:
    """A tool in its grasp frame plus the map from that frame to canonical."""

    kind: str
    mesh: TriangleMesh          # object (grasp) frame, meters
    canonical: TriangleMesh
    norm: NormalizationInfo
    grip_width: float


@lru_cache(maxsize=None)
def get_tool(kind: str) -> ToolAsset:
    base = build_tool_mesh(kind)
    # grasp point sits GRASP_HEIGHT above the base on the tool axis
    mesh = TriangleMesh(base.vertices - np.array([0.0, 0.0, GRASP_HEIGHT]), base.faces)
    canonical, norm = normalize_to_unit_sphere(mesh)
    return ToolAsset(kind, mesh, canonical, norm, float(TOOL_DIMENSIONS[kind][1]))


@dataclass
class Scene:
    tool: str
    xi: np.ndarray          # (x, z, theta) of the object in the EE frame
    pitch: float            # approach tilt from vertical, about the EE y axis
    yaw: float
    ee_start: np.ndarray    # 4x4 EE pose before the press

    @property
    def press_direction(self):
        # EE approach axis in world
        return self.ee_start[:3, 2].copy()


def ee_orientation(pitch, yaw):
    """EE z (approach) points down at zero tilt; the tilt rotates about EE y."""
    return frames.rot_z(yaw) @ frames.rot_x(np.pi) @ frames.rot_y(pitch)


def sample_interaction(tool: str, rng: np.random.Generator, xi=None) -> Scene:
    t = XI_TRANSLATION_RANGE
    draw_xi = np.array([rng.uniform(-t, t), rng.uniform(-t, t),
                        rng.uniform(-XI_ROTATION_RANGE, XI_ROTATION_RANGE)])
    pitch = rng.uniform(-TILT_RANGE, TILT_RANGE)
    yaw = rng.uniform(-np.pi, np.pi)
    if xi is not None:
        draw_xi = np.asarray(xi, dtype=np.float64)
    R = ee_orientation(pitch, yaw)
    ee = frames.make_pose(R, np.array([0.0, 0.0, EE_START_HEIGHT]))
    return Scene(tool, draw_xi, float(pitch), float(yaw), ee)


@dataclass
class PressResult:
    ee_pose: np.ndarray
    object_pose: np.ndarray
    deepest_point: np.ndarray
    contact_centroid: np.ndarray
    reaction: np.ndarray
    penetration: float
    travel: float


def _clip_triangles(tri, height, below=True):
    """Clip triangles to ``z <= height`` (or ``z > height``); returns the pieces
    as a (K, 3, 3) array of triangles with the input winding."""
    out = []
    sign = 1.0 if below else -1.0
    for a, b, c in tri:
        poly = [a, b, c]
        d = [sign * (p[2] - height) for p in poly]
        kept = []
        for i in range(3):
            p, q = poly[i], poly[(i + 1) % 3]
            dp, dq = d[i], d[(i + 1) % 3]
            if dp <= 0:
                kept.append(p)
            if (dp < 0 < dq) or (dq < 0 < dp):
                s = dp / (dp - dq)
                kept.append(p + s * (q - p))
        for i in range(1, len(kept) - 1):
            out.append((kept[0], kept[i], kept[i + 1]))
    return np.array(out).reshape(-1, 3, 3)


def _triangle_soup(tri):
    return TriangleMesh(tri.reshape(-1, 3), np.arange(len(tri) * 3).reshape(-1, 3))


def resolve_press(mesh: TriangleMesh, scene: Scene, delta_pen=DELTA_PEN, travel_limit=TRAVEL_LIMIT):
    """Translate the grasped tool along the approach axis until its deepest point
    sits ``delta_pen`` below the table plane."""
    X_wo = scene.ee_start @ frames.se2_pose(scene.xi)
    verts = frames.apply(X_wo, mesh.vertices)
    d = scene.press_direction
    if d[2] >= 0:
        raise UnreachableSceneError("approach axis does not point toward the table")
    low = float(verts[:, 2].min())
    travel = (-delta_pen - low) / d[2]
    if travel < 0 or travel > travel_limit:
        raise UnreachableSceneError(f"press travel {travel:.4f} m outside [0, {travel_limit}]")
    shift = travel * d
    ee = scene.ee_start.copy()
    ee[:3, 3] += shift
    X_wo = ee @ frames.se2_pose(scene.xi)
    verts = verts + shift
    deepest = verts[int(np.argmin(verts[:, 2]))]

    tri = _clip_triangles(verts[mesh.faces], delta_pen, below=True)
    if len(tri) == 0:
        raise InconsistentSceneError("no surface within the penetration band")
    patch = _triangle_soup(tri)
    w = patch.face_areas
    if w.sum() <= 0:
        centroid = deepest.copy()
    else:
        centroid = (tri.mean(axis=1) * w[:, None]).sum(axis=0) / w.sum()
    return PressResult(ee, X_wo, deepest, centroid, TABLE_PLANE[:3].copy(),
                       float(-verts[:, 2].min()), float(travel))


def label_contacts(mesh: TriangleMesh, object_pose, delta_pen, n_points, rng, norm: NormalizationInfo):
    """Surface samples in canonical coordinates with ``c = 1`` iff the world
    point is within ``delta_pen`` of the table plane.

    Positives and negatives are drawn from the two clipped surface regions,
    half each when both exist.
    """
    verts = frames.apply(object_pose, mesh.vertices)
    tri = verts[mesh.faces]
    pos_tri = _clip_triangles(tri, delta_pen, below=True)
    neg_tri = _clip_triangles(tri, delta_pen, below=False)
    pos = _triangle_soup(pos_tri) if len(pos_tri) else None
    if pos is None or pos.area <= 0:
        raise InconsistentSceneError("zero contact area at the resolved pose")
    n_pos = n_points // 2 if len(neg_tri) else n_points
    parts_p, parts_n = [], []
    p, nrm, _ = sample_surface(pos, n_pos, rng)
    parts_p.append(p)
    parts_n.append(nrm)
    if n_points - n_pos > 0:
        p, nrm, _ = sample_surface(_triangle_soup(neg_tri), n_points - n_pos, rng)
        parts_p.append(p)
        parts_n.append(nrm)
    pw = np.concatenate(parts_p)
    nw = np.concatenate(parts_n)
    c = (pw[:, 2] <= delta_pen).astype(np.int8)
    inv = frames.invert(object_pose)
    q = norm.to_canonical(frames.apply(inv, pw))
    n = frames.rotate(inv, nw)
    return QuerySet(q=q, s=np.zeros(len(q)), n=n, c=c, band=np.zeros(len(q), dtype=np.int8))
