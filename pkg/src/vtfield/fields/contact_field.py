"""Contact probability C(q + z_O + pooled shear | H_C(xi, psi)) at surface points."""
from __future__ import annotations

import numpy as np

from .. import ndiff as nd
from ..ndiff.nn import MlpSpec
from ..ndiff.tensor import ContractError, broadcast_to
from .tactile_field import TRIAL_CODE_DIM

ACT_DIM = 512
POOL_DIM = 4
CONTACT_IN = 3 + ACT_DIM + POOL_DIM
CONTACT_SPEC = MlpSpec(CONTACT_IN, 1)
BCE_CLAMP = 1e-7


def contact_condition(xi, psi, use_pose=True):
    xi = nd.as_tensor(xi)
    psi = nd.as_tensor(psi)
    if psi.shape[-1] != TRIAL_CODE_DIM:
        raise ContractError(f"trial code must have length {TRIAL_CODE_DIM}, got {psi.shape[-1]}")
    if not use_pose:
        xi = nd.Tensor(np.zeros(xi.shape, dtype=np.float32))
    return nd.concat([xi, psi], axis=-1)


def pooled_shear(pred_left, pred_right):
    """Mean predicted ``[u, v]`` per sensor, concatenated: ``(..., 4)``."""
    return nd.concat([nd.mean(pred_left, axis=-2), nd.mean(pred_right, axis=-2)], axis=-1)


def assemble_input(q, z_O, pooled):
    """Stack ``q (.., N, 3)``, ``z_O (.., N, 512)`` and ``pooled (.., 4)``
    broadcast over the N points into ``(.., N, 519)``."""
    q = nd.as_tensor(np.asarray(q, dtype=np.float32)) if not isinstance(q, nd.Tensor) else q
    z_O = nd.as_tensor(np.asarray(z_O, dtype=np.float32)) if not isinstance(z_O, nd.Tensor) else z_O
    pooled = nd.as_tensor(pooled)
    shape = (*q.shape[:-1], POOL_DIM)
    pooled = nd.reshape(pooled, (*pooled.shape[:-1], 1, POOL_DIM))
    return nd.concat([q, z_O, broadcast_to(pooled, shape)], axis=-1)


def contact_logits(model, inputs, xi, psi):
    inputs = nd.as_tensor(inputs)
    if inputs.shape[-1] != CONTACT_IN:
        raise ContractError(f"contact input length {inputs.shape[-1]} != {CONTACT_IN}")
    params = nd.hypernet_forward(model.H_C, contact_condition(xi, psi, model.use_pose))
    out, _ = nd.mlp_forward(params, inputs)
    return out[..., 0]


def contact_logits_split(model, base, pooled, xi, psi, return_params=False):
    """Same as :func:`contact_logits` on ``assemble_input(q, z_O, pooled)``,
    with ``base = q + z_O`` held constant so no input gradient is formed
    for the 515 constant columns."""
    base = np.asarray(base, dtype=np.float32)
    if base.shape[-1] + POOL_DIM != CONTACT_IN:
        raise ContractError(f"contact input length {base.shape[-1] + POOL_DIM} != {CONTACT_IN}")
    params = nd.hypernet_forward(model.H_C, contact_condition(xi, psi, model.use_pose))
    w0, b0 = params.weights[0], params.biases[0]
    k = CONTACT_IN - POOL_DIM
    pooled = nd.as_tensor(pooled)
    if w0.ndim == 3:
        pooled = nd.reshape(pooled, (pooled.shape[0], 1, POOL_DIM))
        w_base, w_pool = nd.getitem(w0, (slice(None), slice(0, k))), nd.getitem(w0, (slice(None), slice(k, None)))
    else:
        pooled = nd.reshape(pooled, (1, POOL_DIM))
        w_base, w_pool = nd.getitem(w0, slice(0, k)), nd.getitem(w0, slice(k, None))
    z = nd.matmul(base, w_base) + nd.matmul(pooled, w_pool) + b0
    h = nd.sin(z * params.spec.omega0)
    n = len(params.weights)
    for i in range(1, n):
        z = nd.matmul(h, params.weights[i]) + params.biases[i]
        h = nd.sin(z * params.spec.omega0) if i < n - 1 else z
    if return_params:
        return h[..., 0], params
    return h[..., 0]


def contact_forward(model, inputs, xi, psi):
    """Contact probability per input row."""
    return nd.sigmoid(contact_logits(model, inputs, xi, psi))


def contact_loss(probs, labels, clamp=BCE_CLAMP):
    """Mean binary cross-entropy on probabilities clamped to ``[clamp, 1 - clamp]``."""
    p = nd.clip(nd.as_tensor(probs), clamp, 1.0 - clamp)
    y = np.asarray(labels, dtype=p.dtype)
    ll = nd.log(p) * y + nd.log(1.0 - p) * (1.0 - y)
    return nd.mean(ll) * -1.0


def softplus(x):
    """``log(1 + e^x)`` in the overflow-free form ``relu(x) + log(1 + e^-|x|)``."""
    return nd.relu(x) + nd.log(nd.exp(nd.absolute(x) * -1.0) + 1.0)


def contact_loss_from_logits(logits, labels):
    """Same quantity as :func:`contact_loss` evaluated from logits without
    saturating (used for training)."""
    y = np.asarray(labels, dtype=logits.dtype)
    return nd.mean(softplus(logits) - logits * y)

