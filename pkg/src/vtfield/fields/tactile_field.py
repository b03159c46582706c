"""Per-sensor shear field T(g | H_T(xi, psi_s)) over normalized grid points."""
from __future__ import annotations

import numpy as np

from .. import ndiff as nd
from ..ndiff.nn import MlpSpec
from ..ndiff.tensor import ContractError

TACTILE_SPEC = MlpSpec(2, 2)
POSE_DIM = 3
SENSOR_CODE_DIM = 6
TRIAL_CODE_DIM = 2 * SENSOR_CODE_DIM
SENSORS = ("left", "right")


def sensor_slice(sensor):
    if sensor == "left":
        return slice(0, SENSOR_CODE_DIM)
    if sensor == "right":
        return slice(SENSOR_CODE_DIM, TRIAL_CODE_DIM)
    raise ContractError(f"unknown sensor id '{sensor}'")


def tactile_condition(xi, psi_s, use_pose=True):
    xi = nd.as_tensor(xi)
    psi_s = nd.as_tensor(psi_s)
    if psi_s.shape[-1] != SENSOR_CODE_DIM:
        raise ContractError(f"sensor trial code must have length {SENSOR_CODE_DIM}, got {psi_s.shape[-1]}")
    if not use_pose:
        xi = nd.Tensor(np.zeros(xi.shape, dtype=np.float32))
    return nd.concat([xi, psi_s], axis=-1)


def tactile_forward(model, sensor, xi, psi_s, g):
    """Predicted ``[u, v]`` at normalized grid points ``g``.

    ``xi`` (3,) and ``psi_s`` (6,) give ``(N, 2)``; batches ``(B, 3)``/``(B, 6)``
    give ``(B, N, 2)``.
    """
    if sensor not in model.H_T:
        raise ContractError(f"unknown sensor id '{sensor}'")
    cond = tactile_condition(xi, psi_s, model.use_pose)
    params = nd.hypernet_forward(model.H_T[sensor], cond)
    out, _ = nd.mlp_forward(params, np.asarray(g, dtype=np.float32) if not isinstance(g, nd.Tensor) else g)
    return out


def shear_loss(pred, observed):
    """Mean over grid points of the component-summed absolute error.

    Leading batch axes are averaged too.
    """
    pred = nd.as_tensor(pred)
    obs = np.asarray(observed, dtype=pred.dtype)
    if pred.shape != obs.shape:
        raise ContractError(f"shear count mismatch: prediction {pred.shape} vs observation {obs.shape}")
    n_points = int(np.prod(pred.shape[:-1]))
    return nd.tsum(nd.absolute(pred - obs)) * (1.0 / n_points)
