"""Two-finger tactile sensors: grid, analytic shear synthesis and the
membrane-contact point cloud."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geom.mesh import TriangleMesh
from ..geom.sdf import first_hits
from . import frames

GRID_ROWS = 30
GRID_COLS = 20
SENSOR_HALF_X = 0.008
SENSOR_HALF_Y = 0.01215
KAPPA_T = 25.0
SHEAR_EPS = 1e-8
MEMBRANE_DEPTH = 0.0015
SENSORS = ("left", "right")


class EmptyTactileError(RuntimeError):
    pass


@dataclass(frozen=True)
class SensorGrid:
    """600 grid points, rows along s_x and columns along s_y, row-major."""

    metric: np.ndarray
    normalized: np.ndarray

    @staticmethod
    def default():
        sx = np.linspace(-SENSOR_HALF_X, SENSOR_HALF_X, GRID_ROWS)
        sy = np.linspace(-SENSOR_HALF_Y, SENSOR_HALF_Y, GRID_COLS)
        gx, gy = np.meshgrid(sx, sy, indexing="ij")
        metric = np.stack([gx.ravel(), gy.ravel()], axis=1)
        normalized = metric / np.array([2 * SENSOR_HALF_X, 2 * SENSOR_HALF_Y])
        return SensorGrid(metric, normalized)

    def __len__(self):
        return len(self.metric)


GRID = SensorGrid.default()


@dataclass(frozen=True)
class SensorFrame:
    """Sensor pad in the EE frame; ``ez`` points from the pad into the object."""

    origin: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray


def sensor_frame(sensor: str, grip_width: float) -> SensorFrame:
    h = 0.5 * grip_width
    if sensor == "left":
        return SensorFrame(np.array([0.0, h, 0.0]), np.array([1.0, 0, 0]),
                           np.array([0.0, 0, 1]), np.array([0.0, -1, 0]))
    if sensor == "right":
        return SensorFrame(np.array([0.0, -h, 0.0]), np.array([-1.0, 0, 0]),
                           np.array([0.0, 0, 1]), np.array([0.0, 1, 0]))
    raise ValueError(f"unknown sensor '{sensor}'")


def normalize_shear(raw):
    mag = np.linalg.norm(raw, axis=-1, keepdims=True)
    return np.where(mag > SHEAR_EPS, raw / np.where(mag > SHEAR_EPS, mag, 1.0), 0.0)


def shear_from_wrench(force_ee, torque_n, frame: SensorFrame, kappa=KAPPA_T, grid=GRID):
    """Tangential projection of ``F + kappa * tau_n * (ez x r_g)``, normalized."""
    r = grid.metric[:, :1] * frame.ex + grid.metric[:, 1:] * frame.ey
    raw = force_ee[None] + kappa * torque_n * np.cross(frame.ez, r)
    uv = np.stack([raw @ frame.ex, raw @ frame.ey], axis=1)
    return normalize_shear(uv)


def synthesize_shear(press, sensor: str, grip_width: float, kappa=KAPPA_T, grid=GRID):
    """Shear field on one sensor from the table reaction transmitted through the grasp."""
    frame = sensor_frame(sensor, grip_width)
    inv = frames.invert(press.ee_pose)
    force = frames.rotate(inv, press.reaction)
    p_c = frames.apply(inv, press.contact_centroid)
    # grasp center is the EE origin
    torque_n = float(np.cross(p_c, force) @ frame.ez)
    return shear_from_wrench(force, torque_n, frame, kappa, grid)


def tactile_cloud(mesh: TriangleMesh, xi, ee_pose, grip_width, depth=MEMBRANE_DEPTH,
                  grid=GRID, split=False):
    """Object surface points under each pad within ``depth`` of the pad plane.

    Rays are cast along each pad normal from the 30x20 grid; returns world
    points (and per-sensor counts with ``split=True``).
    """
    X_eo = frames.se2_pose(xi)
    mesh_ee = TriangleMesh(frames.apply(X_eo, mesh.vertices), mesh.faces)
    standoff = 0.01
    clouds = []
    for sensor in SENSORS:
        f = sensor_frame(sensor, grip_width)
        origins = (f.origin + grid.metric[:, :1] * f.ex + grid.metric[:, 1:] * f.ey) - standoff * f.ez
        t, _ = first_hits(origins, f.ez, mesh_ee)
        keep = np.isfinite(t) & (t - standoff <= depth)
        pts = origins[keep] + t[keep, None] * f.ez
        if len(pts) == 0:
            raise EmptyTactileError(f"no intrinsic contact under the {sensor} sensor")
        clouds.append(frames.apply(ee_pose, pts))
    cloud = np.concatenate(clouds)
    if split:
        return cloud, len(clouds[0])
    return cloud


def augment_shear(shear, rng, sigma=0.1):
    """Per-component Gaussian noise in the sensor frame, then renormalized.
    Zero vectors stay zero."""
    noisy = shear + rng.normal(0.0, sigma, size=shear.shape)
    zero = np.linalg.norm(shear, axis=-1, keepdims=True) <= SHEAR_EPS
    return np.where(zero, 0.0, normalize_shear(noisy))
