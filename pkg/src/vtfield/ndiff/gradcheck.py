"""Central finite-difference checks of reverse-mode gradients."""
from __future__ import annotations

import numpy as np

from .tensor import backward


def to_float64(tensors):
    """Cast tensors in place to float64 (finite differences need the headroom)."""
    for t in tensors:
        t.data = t.data.astype(np.float64)
        t.grad = None
    return tensors


def analytic_grads(loss_fn, tensors):
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def probe_gradients(loss_fn, tensors: list, n_probes, rng, h=1e-6, min_rel_magnitude=1e-3, accept=None):
    """Compare analytic and central-difference derivatives at random entries.

    Entries are drawn among those whose analytic derivative is at least
    ``min_rel_magnitude`` of the largest one, so relative errors are not
    dominated by round-off on near-zero slopes. ``accept(tensor, index, h)``
    may veto a probe (e.g. one straddling a kink).
    Returns a list of ``(tensor index, flat index, analytic, numeric, rel error)``.
    """
    grads = analytic_grads(loss_fn, tensors)
    scale = max(float(np.abs(g).max()) for g in grads) or 1.0
    candidates = [(k, i) for k, g in enumerate(grads)
                  for i in np.flatnonzero(np.abs(g.reshape(-1)) >= min_rel_magnitude * scale)]
    if not candidates:
        raise ValueError("no gradient entries above the probe threshold")
    order = rng.permutation(len(candidates))
    out = []
    for j in order:
        if len(out) >= n_probes:
            break
        k, i = candidates[j]
        t = tensors[k]
        if accept is not None and not accept(t, i, h):
            continue
        flat = t.data.reshape(-1)
        old = flat[i]
        flat[i] = old + h
        up = loss_fn().item()
        flat[i] = old - h
        down = loss_fn().item()
        flat[i] = old
        num = (up - down) / (2 * h)
        ana = float(grads[k].reshape(-1)[i])
        rel = abs(ana - num) / max(abs(ana), abs(num), 1e-12)
        out.append((k, int(i), ana, num, rel))
    return out


def max_relative_error(probes):
    return max(p[-1] for p in probes) if probes else float("nan")


__all__ = ["to_float64", "analytic_grads", "probe_gradients", "max_relative_error"]
