"""Depth ray casting from a ring of cameras around the end effector."""
from __future__ import annotations

import numpy as np

from ..geom.mesh import TriangleMesh, _hull_mesh
from ..geom.sdf import first_hits
from . import frames

RING_RADIUS = 0.25
RING_ELEVATION = np.deg2rad(20.0)
N_CAMERAS = 8
N_POINTS = 1024
IMAGE_SIZE = 64


def camera_centers(target, n_cameras=N_CAMERAS, radius=RING_RADIUS, elevation=RING_ELEVATION):
    az = 2 * np.pi * np.arange(n_cameras) / n_cameras
    ring = np.stack([np.cos(elevation) * np.cos(az), np.cos(elevation) * np.sin(az),
                     np.full(n_cameras, np.sin(elevation))], axis=1)
    return target + radius * ring


def finger_meshes(grip_width, ee_pose):
    """Two finger bodies behind the pads, as occluders in world coordinates."""
    out = []
    h = 0.5 * grip_width
    for sgn in (1.0, -1.0):
        y0, y1 = sgn * h, sgn * (h + 0.012)
        pts = np.array([(x, y, z) for x in (-0.011, 0.011) for y in (y0, y1) for z in (-0.06, 0.014)])
        m = _hull_mesh(pts)
        out.append(TriangleMesh(frames.apply(ee_pose, m.vertices), m.faces))
    return out


def _camera_rays(center, look_at, sphere_c, sphere_r, image_size):
    """Pinhole rays toward ``look_at`` whose field of view covers the
    bounding sphere; rays missing the sphere are culled."""
    fwd = look_at - center
    fwd /= np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    to_c = sphere_c - center
    dist = np.linalg.norm(to_c)
    off = np.arccos(np.clip(to_c @ fwd / dist, -1.0, 1.0))
    half = min(off + np.arcsin(min(sphere_r / dist, 1.0)), np.deg2rad(80.0))
    s = np.tan(half) * np.linspace(-1, 1, image_size)
    a, b = np.meshgrid(s, s, indexing="ij")
    dirs = fwd + a.reshape(-1, 1) * right + b.reshape(-1, 1) * up
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # keep rays that pass within the bounding sphere
    along = dirs @ to_c
    perp2 = dist ** 2 - along ** 2
    keep = (along > 0) & (perp2 <= sphere_r ** 2)
    return dirs[keep]


def render_partial_cloud(mesh: TriangleMesh, object_pose, ee_pose, n_cameras=N_CAMERAS,
                         n_points=N_POINTS, rng=None, occluders=(), image_size=IMAGE_SIZE,
                         return_faces=False, drop_below_table=True):
    """First-hit points on the posed tool, merged over cameras and downsampled.

    Points hidden behind an occluder or under the table are not observed.
    """
    if n_cameras < 1:
        raise ValueError("n_cameras must be >= 1")
    world = TriangleMesh(frames.apply(object_pose, mesh.vertices), mesh.faces)
    lo, hi = world.bounds
    sc = 0.5 * (lo + hi)
    sr = float(np.linalg.norm(world.vertices - sc, axis=1).max()) * 1.01
    target = ee_pose[:3, 3]
    pts, faces = [], []
    for center in camera_centers(target, n_cameras):
        dirs = _camera_rays(center, target, sc, sr, image_size)
        if len(dirs) == 0:
            continue
        origins = np.broadcast_to(center, dirs.shape)
        t, f = first_hits(origins, dirs, world)
        hit = np.isfinite(t)
        for occ in occluders:
            t_occ, _ = first_hits(origins, dirs, occ)
            hit &= ~(t_occ < t)
        p = center + t[hit, None] * dirs[hit]
        fh = f[hit]
        if drop_below_table:
            above = p[:, 2] >= 0.0
            p, fh = p[above], fh[above]
        pts.append(p)
        faces.append(fh)
    pts = np.concatenate(pts) if pts else np.zeros((0, 3))
    faces = np.concatenate(faces) if faces else np.zeros(0, dtype=np.int64)
    if n_points is not None and len(pts) > n_points:
        rng = np.random.default_rng(0) if rng is None else rng
        idx = np.sort(rng.choice(len(pts), n_points, replace=False))
        pts, faces = pts[idx], faces[idx]
    if return_faces:
        return pts, faces
    return pts
