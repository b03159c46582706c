"""Tape-based reverse-mode autodiff over dense numpy arrays.

Every op creates a new :class:`Tensor`; when any input requires a gradient
the result records its parents and a closure that pushes the upstream
gradient back to them. :func:`backward` walks the recorded graph in reverse
topological order.

Reductions accumulate in float64 so long loss sums stay stable while the
bulk arithmetic stays in the parameters' dtype (float32 by default).
"""
from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32


class ContractError(ValueError):
    """Raised when an operation's preconditions are violated."""


class DimensionError(ContractError):
    """Raised on shape mismatches."""


def _as_array(x, dtype=None):
    if isinstance(x, np.generic):
        # numpy scalars from 0-d arithmetic keep their precision
        x = np.asarray(x)
    if isinstance(x, np.ndarray):
        if dtype is not None and x.dtype != dtype:
            return x.astype(dtype)
        if not np.issubdtype(x.dtype, np.floating):
            return x.astype(dtype or DEFAULT_DTYPE)
        return x
    return np.asarray(x, dtype=dtype or DEFAULT_DTYPE)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _wrap(x, like):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if isinstance(like, Tensor) else None
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    g = _unbroadcast(np.asarray(g), t.shape)
    if g.dtype != t.dtype:
        g = g.astype(t.dtype)
    if t.grad is None:
        t.grad = g.copy() if not g.flags.owndata else g
    else:
        t.grad = t.grad + g


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


# -- elementwise arithmetic ----------------------------------------------
def add(a, b):
    a, b = _wrap(a, b), _wrap(b, a)

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _wrap(a, b), _wrap(b, a)

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _wrap(a, b), _wrap(b, a)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _make(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = _wrap(a, b), _wrap(b, a)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g / b.data)
        if b.requires_grad:
            _accumulate(b, -g * a.data / (b.data * b.data))

    return _make(a.data / b.data, (a, b), bw)


def power(a, p):
    if isinstance(p, Tensor):
        raise ContractError("power only supports constant exponents")
    a = as_tensor(a)
    p = float(p)

    def bw(g):
        _accumulate(a, g * p * a.data ** (p - 1.0))

    return _make(a.data ** p, (a,), bw)


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def bw(g):
        _accumulate(a, g * 0.5 / out)

    return _make(out, (a,), bw)


def sin(a):
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, g * np.cos(a.data))

    return _make(np.sin(a.data), (a,), bw)


def cos(a):
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, -g * np.sin(a.data))

    return _make(np.cos(a.data), (a,), bw)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)

    def bw(g):
        _accumulate(a, g * out)

    return _make(out, (a,), bw)


def log(a):
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, g / a.data)

    return _make(np.log(a.data), (a,), bw)


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0

    def bw(g):
        _accumulate(a, g * mask)

    return _make(np.where(mask, a.data, 0).astype(a.dtype), (a,), bw)


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def bw(g):
        _accumulate(a, g * out * (1.0 - out))

    return _make(out.astype(a.dtype), (a,), bw)


def absolute(a):
    """|a| with subgradient 0 at exactly zero."""
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), bw)


def clip(a, lo, hi):
    """Clamp to [lo, hi]; gradient passes only where the value is interior."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        _accumulate(a, g * inside)

    return _make(np.clip(a.data, lo, hi), (a,), bw)


# -- linear algebra -------------------------------------------------------
def matmul(a, b):
    a, b = _wrap(a, b), _wrap(b, a)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not chain")
    if b.ndim == 2 and a.ndim > 2:
        # fold leading axes into one GEMM instead of many small ones
        lead = a.shape[:-1]
        out = reshape(a, (-1, a.shape[-1])) @ b
        return reshape(out, (*lead, b.shape[-1]))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            if a.ndim == 1:
                _accumulate(b, np.matmul(a.data[:, None], g[..., None, :]))
            elif b.ndim == 2:
                _accumulate(b, a.data.T @ g)
            else:
                _accumulate(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _make(np.matmul(a.data, b.data), (a, b), bw)


def matmul_nt(a, b):
    """``a @ b.T`` for 2D ``a`` (M, K) and ``b`` (N, K).

    Keeps ``b`` row-major in (N, K) layout, which is the fast orientation for
    short-and-wide products like hypernetwork heads.
    """
    a, b = _wrap(a, b), _wrap(b, a)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"matmul_nt shapes {a.shape} and {b.shape} do not chain")

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data)
        if b.requires_grad:
            _accumulate(b, g.T @ a.data)

    return _make(a.data @ b.data.T, (a, b), bw)


# -- reductions -----------------------------------------------------------
def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64)).astype(a.dtype)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).astype(a.dtype))

    return _make(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


# -- shape manipulation ---------------------------------------------------
def reshape(a, shape):
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, np.reshape(g, a.shape))

    return _make(a.data.reshape(shape), (a,), bw)


def swapaxes(a, i, j):
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, np.swapaxes(g, i, j))

    return _make(np.swapaxes(a.data, i, j), (a,), bw)


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, slice, type(Ellipsis), type(None))) for i in items)


def getitem(a, idx):
    a = as_tensor(a)
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros(a.shape, dtype=a.dtype)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        _accumulate(a, full)

    return _make(a.data[idx], (a,), bw)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, part)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def broadcast_to(a, shape):
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, g)

    return _make(np.broadcast_to(a.data, shape).copy(), (a,), bw)


# -- driver ---------------------------------------------------------------
def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every tensor that contributes to scalar ``loss``.

    Gradients of leaves accumulate, so call ``zero_grad`` (or build a fresh
    graph) between independent evaluations.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            node.grad = None
