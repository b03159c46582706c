"""Adam with bias correction, a row-sparse variant for code tables, and a
cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


class OptimizerError(RuntimeError):
    def __init__(self, message, param_name=None):
        super().__init__(message)
        self.param_name = param_name


if numba is not None:

    @numba.njit(cache=True, fastmath=True)
    def _adam_kernel(p, g, m, v, lr_t, b1, b2, eps_t):
        pf = p.reshape(-1)
        gf = g.reshape(-1)
        mf = m.reshape(-1)
        vf = v.reshape(-1)
        # scalars in the parameter dtype so the loop vectorizes in float32
        one = p.dtype.type(1.0)
        lr = p.dtype.type(lr_t)
        c1 = p.dtype.type(b1)
        c2 = p.dtype.type(b2)
        e = p.dtype.type(eps_t)
        for i in range(pf.size):
            gi = gf[i]
            mi = c1 * mf[i] + (one - c1) * gi
            vi = c2 * vf[i] + (one - c2) * gi * gi
            mf[i] = mi
            vf[i] = vi
            pf[i] -= lr * mi / (np.sqrt(vi) + e)


def _adam_numpy(p, g, m, v, lr_t, b1, b2, eps_t):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    p -= lr_t * m / (np.sqrt(v) + eps_t)


@dataclass
class AdamState:
    """Moments are keyed by parameter name and shaped like the parameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _check_finite(name, g):
    # a float64 sum is finite iff every entry is (no realistic overflow)
    if not np.isfinite(np.sum(g, dtype=np.float64)):
        raise OptimizerError(f"non-finite gradient for parameter '{name}'", name)


def adam_step(state: AdamState, params: dict, grads: dict | None = None, lr: float | None = None):
    """One Adam update in place.

    ``params`` maps names to :class:`Tensor` (or arrays); gradients default to
    each tensor's ``.grad``. Parameters with no gradient are treated as having
    a zero gradient, so their moments still decay.
    """
    lr = state.lr if lr is None else lr
    items = []
    for name, p in params.items():
        data = p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
        if grads is not None:
            g = grads.get(name)
        else:
            g = getattr(p, "grad", None)
        if g is None:
            g = np.zeros_like(data)
        g = np.asarray(g, dtype=data.dtype)
        if g.shape != data.shape:
            raise OptimizerError(f"gradient shape {g.shape} != parameter shape {data.shape}", name)
        _check_finite(name, g)
        items.append((name, data, g))

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    # p -= lr * (m/bc1) / (sqrt(v/bc2) + eps), rewritten for a single fused pass
    lr_t = lr * math.sqrt(bc2) / bc1
    eps_t = state.eps * math.sqrt(bc2)
    for name, data, g in items:
        if name not in state.m:
            state.m[name] = np.zeros_like(data)
            state.v[name] = np.zeros_like(data)
        m, v = state.m[name], state.v[name]
        if m.shape != data.shape:
            raise OptimizerError(f"moment shape {m.shape} != parameter shape {data.shape}", name)
        g = np.ascontiguousarray(g)
        if numba is not None and data.flags.c_contiguous and data.size > 4096:
            _adam_kernel(data, g, m, v, lr_t, state.beta1, state.beta2, eps_t)
        else:
            _adam_numpy(data, g, m, v, lr_t, state.beta1, state.beta2, eps_t)
    return params, state


@dataclass
class RowAdamState:
    """Adam over a table whose rows are updated independently.

    Each row keeps its own step count, so a row's trajectory depends only on
    the gradients it received (auto-decoder code tables).
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    steps: np.ndarray | None = None


def row_adam_step(state: RowAdamState, table: np.ndarray, rows, grads: np.ndarray, lr=None,
                  name="table"):
    lr = state.lr if lr is None else lr
    rows = np.asarray(rows, dtype=np.int64)
    if len(np.unique(rows)) != len(rows):
        raise OptimizerError("duplicate rows in a sparse update", name)
    _check_finite(name, grads)
    if state.m is None:
        state.m = np.zeros_like(table)
        state.v = np.zeros_like(table)
        state.steps = np.zeros(len(table), dtype=np.int64)
    state.steps[rows] += 1
    t = state.steps[rows][:, None].astype(np.float64)
    m = state.beta1 * state.m[rows] + (1 - state.beta1) * grads
    v = state.beta2 * state.v[rows] + (1 - state.beta2) * grads * grads
    state.m[rows] = m
    state.v[rows] = v
    mhat = m / (1 - state.beta1 ** t)
    vhat = v / (1 - state.beta2 ** t)
    table[rows] -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(table.dtype)
    return table, state


def cosine_lr(step, total_steps, lr_max, lr_min):
    """Half-cosine decay from ``lr_max`` at step 0 to ``lr_min`` at ``total_steps``."""
    if total_steps <= 0:
        return lr_min
    frac = min(max(step / total_steps, 0.0), 1.0)
    return lr_min + 0.5 * (1.0 + math.cos(math.pi * frac)) * (lr_max - lr_min)
