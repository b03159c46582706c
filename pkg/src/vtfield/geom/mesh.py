"""Triangle meshes, the six procedural tools, normalization and mesh/cloud I/O."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull


class GeometryError(ValueError):
    pass


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @property
    def is_empty(self):
        return len(self.faces) == 0

    @cached_property
    def triangles(self):
        return self.vertices[self.faces]

    @cached_property
    def face_areas(self):
        tri = self.triangles
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    @cached_property
    def face_normals(self):
        tri = self.triangles
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    @property
    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def extent(self):
        lo, hi = self.bounds
        return hi - lo

    @property
    def area(self):
        return float(self.face_areas.sum())

    def edges(self):
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    def euler_characteristic(self):
        e = np.sort(self.edges(), axis=1)
        n_edges = len(np.unique(e, axis=0))
        n_verts = len(np.unique(self.faces))
        return n_verts - n_edges + len(self.faces)

    @cached_property
    def is_watertight(self):
        """Every directed edge appears once and its reverse exactly once."""
        if self.is_empty:
            return False
        e = self.edges()
        n = int(self.faces.max()) + 1
        key = e[:, 0] * n + e[:, 1]
        rkey = e[:, 1] * n + e[:, 0]
        uniq, counts = np.unique(key, return_counts=True)
        if np.any(counts != 1):
            return False
        return bool(np.all(np.isin(rkey, uniq)))

    def transformed(self, R=np.eye(3), t=np.zeros(3), scale=1.0):
        return TriangleMesh(scale * (self.vertices @ np.asarray(R).T) + np.asarray(t), self.faces)

    def volume(self):
        tri = self.triangles
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)


# -- procedural tools ---------------------------------------------------------
TOOL_KINDS = ("mountain", "rectangle", "pyramid", "hex", "cylinder", "semisphere")

# bounding boxes (x, y, z) in meters
TOOL_DIMENSIONS = {
    "mountain": (0.04, 0.04, 0.08),
    "rectangle": (0.05, 0.03, 0.08),
    "pyramid": (0.04, 0.04, 0.08),
    "hex": (0.04, 0.035, 0.10),
    "cylinder": (0.04, 0.04, 0.08),
    "semisphere": (0.04, 0.035, 0.117),
}

TIP_HEIGHT = 0.02
_RING = 32


def _box_points(sx, sy, z0, z1):
    xs, ys = (-sx / 2, sx / 2), (-sy / 2, sy / 2)
    return np.array([(x, y, z) for x in xs for y in ys for z in (z0, z1)])


def _ellipse_ring(ax, ay, z, n=_RING):
    a = 2 * np.pi * np.arange(n) / n
    return np.stack([ax * np.cos(a), ay * np.sin(a), np.full(n, z)], axis=1)


def _hull_mesh(points):
    points = np.asarray(points, dtype=np.float64)
    hull = ConvexHull(points)
    used = np.unique(hull.simplices)
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = points[used]
    faces = remap[hull.simplices]
    centroid = verts.mean(axis=0)
    tri = verts[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", n, tri.mean(axis=1) - centroid) < 0
    faces[flip] = faces[flip][:, ::-1]
    return TriangleMesh(verts, faces)


def build_tool_mesh(kind: str) -> TriangleMesh:
    """Watertight convex tool with its base at z=0 and the tip toward +z.

    The bounding box equals ``TOOL_DIMENSIONS[kind]``.
    """
    if kind not in TOOL_DIMENSIONS:
        raise GeometryError(f"unknown tool kind '{kind}' (expected one of {TOOL_KINDS})")
    sx, sy, sz = TOOL_DIMENSIONS[kind]
    if kind == "rectangle":
        pts = _box_points(sx, sy, 0.0, sz)
    elif kind == "mountain":
        shaft = sz - TIP_HEIGHT
        ridge = np.array([(0.0, -sy / 2, sz), (0.0, sy / 2, sz)])
        pts = np.vstack([_box_points(sx, sy, 0.0, shaft), ridge])
    elif kind == "pyramid":
        shaft = sz - TIP_HEIGHT
        pts = np.vstack([_box_points(sx, sy, 0.0, shaft), [(0.0, 0.0, sz)]])
    elif kind == "hex":
        hexagon = np.array([(sx / 2, 0), (sx / 4, sy / 2), (-sx / 4, sy / 2),
                            (-sx / 2, 0), (-sx / 4, -sy / 2), (sx / 4, -sy / 2)])
        pts = np.vstack([np.c_[hexagon, np.zeros(6)], np.c_[hexagon, np.full(6, sz)]])
    elif kind == "cylinder":
        pts = np.vstack([_ellipse_ring(sx / 2, sy / 2, 0.0), _ellipse_ring(sx / 2, sy / 2, sz)])
    else:  # semisphere: rounded shaft capped by a half-ellipsoid dome
        ax, ay, cap = sx / 2, sy / 2, sx / 2
        shaft = sz - cap
        rings = [_ellipse_ring(ax, ay, 0.0), _ellipse_ring(ax, ay, shaft)]
        for lat in np.linspace(0, np.pi / 2, 7)[1:-1]:
            rings.append(_ellipse_ring(ax * np.cos(lat), ay * np.cos(lat), shaft + cap * np.sin(lat)))
        rings.append([(0.0, 0.0, sz)])
        pts = np.vstack(rings)
    return _hull_mesh(pts)


# -- normalization ------------------------------------------------------------
@dataclass(frozen=True)
class NormalizationInfo:
    """``canonical = scale * (metric - center)``."""

    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def to_canonical(self, p):
        return self.scale * (np.asarray(p, dtype=np.float64) - self.center)

    def to_metric(self, q):
        return np.asarray(q, dtype=np.float64) / self.scale + self.center


def normalize_to_unit_sphere(mesh: TriangleMesh):
    """Center on the bounding-box midpoint and scale so the farthest vertex sits on r=1."""
    if len(mesh.vertices) == 0:
        raise GeometryError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds
    center = 0.5 * (lo + hi)
    radius = float(np.linalg.norm(mesh.vertices - center, axis=1).max())
    if radius <= 0:
        raise GeometryError("degenerate mesh with zero radius")
    info = NormalizationInfo(center=center, scale=1.0 / radius)
    return TriangleMesh(info.to_canonical(mesh.vertices), mesh.faces), info


# -- I/O ----------------------------------------------------------------------
def write_obj(path, mesh: TriangleMesh):
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> TriangleMesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(v) for v in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return TriangleMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_ply(path, points, values=None, value_name="c"):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    header = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
              "property float x", "property float y", "property float z"]
    if values is not None:
        header.append(f"property float {value_name}")
    header.append("end_header")
    rows = []
    for i, p in enumerate(points):
        row = f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
        if values is not None:
            row += f" {float(values[i]):.9g}"
        rows.append(row)
    Path(path).write_text("\n".join(header + rows) + "\n")


def read_ply(path):
    lines = Path(path).read_text().splitlines()
    end = lines.index("end_header")
    n = 0
    for line in lines[:end]:
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
    data = np.array([[float(v) for v in line.split()] for line in lines[end + 1:end + 1 + n]])
    return data[:, :3] if n else np.zeros((0, 3))
