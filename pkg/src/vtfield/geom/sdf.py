"""Exact point-to-mesh distances, ray casting and the signed-distance oracle."""
from __future__ import annotations

import numpy as np

from .mesh import GeometryError, TriangleMesh

# three fixed, mutually skew directions for containment voting
_RAY_DIRS = np.array([
    [0.5773502691896258, 0.5773502691896258, 0.5773502691896258],
    [-0.2672612419124244, 0.8017837257372732, -0.5345224838248488],
    [0.8164965809277261, -0.4082482904638631, -0.4082482904638631],
])
_RAY_DIRS = _RAY_DIRS + np.array([[1e-3, -2e-3, 3e-3], [2e-3, 1e-3, -1e-3], [-1e-3, 3e-3, 2e-3]])
_RAY_DIRS /= np.linalg.norm(_RAY_DIRS, axis=1, keepdims=True)


def closest_points_on_triangles(p, a, b, c):
    """Closest point on each triangle for broadcastable ``p`` (..., 3) and
    triangle corners ``a, b, c`` (..., 3). Ericson, Real-Time Collision Detection 5.1.5."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("...i,...i->...", ab, ap)
    d2 = np.einsum("...i,...i->...", ac, ap)
    bp = p - b
    d3 = np.einsum("...i,...i->...", ab, bp)
    d4 = np.einsum("...i,...i->...", ac, bp)
    cp = p - c
    d5 = np.einsum("...i,...i->...", ab, cp)
    d6 = np.einsum("...i,...i->...", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    shape = np.broadcast_shapes(p.shape, a.shape)
    out = np.empty(shape)
    done = np.zeros(shape[:-1], dtype=bool)

    def put(mask, value):
        nonlocal done
        m = mask & ~done
        if np.any(m):
            out[m] = np.broadcast_to(value, shape)[m]
            done |= m

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        put((d6 >= 0) & (d5 <= d6), c)
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[..., None] * ab)
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[..., None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[..., None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        put(np.ones(shape[:-1], dtype=bool), a + v[..., None] * ab + w[..., None] * ac)
    return out


def unsigned_distance(mesh: TriangleMesh, q, chunk=2048, return_face=False):
    """Exhaustive min over all triangles of the point-triangle distance."""
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    tri = mesh.triangles
    a, b, c = tri[None, :, 0], tri[None, :, 1], tri[None, :, 2]
    dist = np.empty(len(q))
    face = np.empty(len(q), dtype=np.int64)
    step = max(1, chunk * 64 // max(len(tri), 1))
    for s in range(0, len(q), step):
        p = q[s:s + step, None, :]
        cp = closest_points_on_triangles(p, a, b, c)
        d2 = np.sum((cp - p) ** 2, axis=-1)
        idx = np.argmin(d2, axis=1)
        face[s:s + step] = idx
        dist[s:s + step] = np.sqrt(d2[np.arange(len(idx)), idx])
    return (dist, face) if return_face else dist


def ray_triangle_hits(origins, dirs, mesh: TriangleMesh, eps=1e-12):
    """Möller-Trumbore; returns ``t`` (rays, faces) with ``inf`` for misses."""
    origins = np.atleast_2d(origins)
    dirs = np.atleast_2d(dirs)
    tri = mesh.triangles
    v0, e1, e2 = tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    pvec = np.cross(dirs[:, None, :], e2[None])
    det = np.einsum("rfi,fi->rf", pvec, e1)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origins[:, None, :] - v0[None]
    u = np.einsum("rfi,rfi->rf", tvec, pvec) * inv
    qvec = np.cross(tvec, e1[None])
    v = np.einsum("ri,rfi->rf", dirs, qvec) * inv
    t = np.einsum("fi,rfi->rf", e2, qvec) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return np.where(hit, t, np.inf)


def first_hits(origins, dirs, mesh: TriangleMesh, chunk=4096):
    """Nearest hit distance and face per ray (``inf``/-1 on miss)."""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if len(dirs) == 1 and len(origins) > 1:
        dirs = np.broadcast_to(dirs, origins.shape)
    t_out = np.full(len(origins), np.inf)
    f_out = np.full(len(origins), -1, dtype=np.int64)
    step = max(1, chunk * 64 // max(len(mesh.faces), 1))
    for s in range(0, len(origins), step):
        t = ray_triangle_hits(origins[s:s + step], dirs[s:s + step], mesh)
        idx = np.argmin(t, axis=1)
        tt = t[np.arange(len(idx)), idx]
        t_out[s:s + step] = tt
        f_out[s:s + step] = np.where(np.isfinite(tt), idx, -1)
    return t_out, f_out


def _parity_inside(mesh, q, direction, chunk=4096):
    inside = np.empty(len(q), dtype=bool)
    step = max(1, chunk * 64 // max(len(mesh.faces), 1))
    d = direction[None]
    for s in range(0, len(q), step):
        t = ray_triangle_hits(q[s:s + step], np.broadcast_to(d, (len(q[s:s + step]), 3)), mesh)
        inside[s:s + step] = (np.isfinite(t).sum(axis=1) % 2) == 1
    return inside


def contains(mesh: TriangleMesh, q):
    """Majority vote of ray-parity tests along three fixed directions."""
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    votes = sum(_parity_inside(mesh, q, d).astype(int) for d in _RAY_DIRS)
    return votes >= 2


def signed_distance(mesh: TriangleMesh, q, surface_tol=1e-12):
    """Exact distance to the mesh, negative inside. Accepts (3,) or (N, 3)."""
    if not mesh.is_watertight:
        raise GeometryError("signed_distance requires a watertight, consistently oriented mesh")
    q_arr = np.asarray(q, dtype=np.float64)
    single = q_arr.ndim == 1
    q2 = np.atleast_2d(q_arr)
    d = unsigned_distance(mesh, q2)
    sign = np.where(contains(mesh, q2), -1.0, 1.0)
    s = np.where(d <= surface_tol, 0.0, sign * d)
    return float(s[0]) if single else s
