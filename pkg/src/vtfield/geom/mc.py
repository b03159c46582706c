"""Zero-level-set extraction on a regular grid."""
from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage import measure

from .mesh import TriangleMesh


def evaluate_grid(field, resolution, bounds=(-1.0, 1.0), chunk=65536):
    """Sample ``field`` (callable on (N,3) arrays) on a ``resolution^3`` grid."""
    lo, hi = bounds
    axis = np.linspace(lo, hi, resolution)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    vals = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        vals[s:s + chunk] = np.asarray(field(pts[s:s + chunk]), dtype=np.float64).reshape(-1)
    return vals.reshape(resolution, resolution, resolution), axis


def marching_cubes(field, resolution=128, bounds=(-1.0, 1.0), level=0.0):
    """Mesh of ``{field = level}``; empty when the field never changes sign.

    Faces are oriented with normals pointing toward increasing field values
    (outward for a negative-inside SDF).
    """
    if resolution < 8:
        raise ValueError("marching_cubes resolution must be >= 8")
    grid = field if isinstance(field, np.ndarray) else evaluate_grid(field, resolution, bounds)[0]
    if not np.all(np.isfinite(grid)):
        raise ValueError("field is not finite on the grid")
    if grid.min() >= level or grid.max() <= level:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    lo, hi = bounds
    step = (hi - lo) / (grid.shape[0] - 1)
    verts, faces, _, _ = measure.marching_cubes(grid, level=level, spacing=(step,) * 3,
                                                allow_degenerate=False)
    return TriangleMesh(verts + lo, faces)


def largest_component(mesh: TriangleMesh) -> TriangleMesh:
    if mesh.is_empty:
        return mesh
    f = mesh.faces
    n = len(mesh.vertices)
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    face_label = labels[f[:, 0]]
    keep = np.bincount(face_label).argmax()
    faces = f[face_label == keep]
    used = np.unique(faces)
    remap = -np.ones(n, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(mesh.vertices[used], remap[faces])
