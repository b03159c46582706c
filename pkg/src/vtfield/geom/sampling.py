"""Surface and query-point sampling with oracle labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh
from .sdf import signed_distance

DEFAULT_COUNTS = {"off": 5000, "on": 15000, "near": 20000}
NEAR_SIGMA = 0.025

BAND_CODES = {"on": 0, "near": 1, "off": 2}


@dataclass
class QuerySet:
    """Column-oriented batch of query samples.

    ``n`` is NaN for samples without a normal label; ``c`` is -1 where no
    contact label exists.
    """

    q: np.ndarray
    s: np.ndarray
    n: np.ndarray
    c: np.ndarray
    band: np.ndarray

    def __len__(self):
        return len(self.q)

    def select(self, idx):
        return QuerySet(self.q[idx], self.s[idx], self.n[idx], self.c[idx], self.band[idx])

    def band_mask(self, name):
        return self.band == BAND_CODES[name]

    def count(self, name):
        return int(self.band_mask(name).sum())


def sample_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator):
    """Area-weighted uniform surface samples; returns ``(points, normals, face_ids)``."""
    prob = mesh.face_areas / mesh.face_areas.sum()
    faces = rng.choice(len(mesh.faces), size=n, p=prob)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.triangles[faces]
    pts = (1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1] + (r1 * r2)[:, None] * tri[:, 2]
    return pts, mesh.face_normals[faces], faces


def sample_unit_ball(n: int, rng: np.random.Generator):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / 3.0)
    return d * r[:, None]


def sample_query_set(mesh_canonical: TriangleMesh, counts=None, near_sigma=NEAR_SIGMA, seed=0):
    """On-surface, near-surface (normal-direction Gaussian offsets) and
    off-surface (uniform in the unit ball) samples labelled by the oracle."""
    counts = dict(DEFAULT_COUNTS if counts is None else counts)
    for k in ("off", "on", "near"):
        if counts.get(k, 0) <= 0:
            raise ValueError(f"query count for band '{k}' must be positive")
    rng = np.random.default_rng(seed)
    on_p, on_n, _ = sample_surface(mesh_canonical, counts["on"], rng)
    base_p, base_n, _ = sample_surface(mesh_canonical, counts["near"], rng)
    near_p = base_p + base_n * rng.normal(0.0, near_sigma, size=(counts["near"], 1))
    off_p = sample_unit_ball(counts["off"], rng)

    near_s = signed_distance(mesh_canonical, near_p)
    off_s = signed_distance(mesh_canonical, off_p)
    nan3 = lambda k: np.full((k, 3), np.nan)
    return QuerySet(
        q=np.concatenate([on_p, near_p, off_p]),
        s=np.concatenate([np.zeros(counts["on"]), near_s, off_s]),
        n=np.concatenate([on_n, nan3(counts["near"]), nan3(counts["off"])]),
        c=np.full(sum(counts.values()), -1, dtype=np.int8),
        band=np.concatenate([np.full(counts["on"], 0), np.full(counts["near"], 1),
                             np.full(counts["off"], 2)]).astype(np.int8),
    )
