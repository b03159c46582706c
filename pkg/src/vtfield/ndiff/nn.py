"""Sine-activated MLPs and the hypernetworks that generate their weights."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import ContractError, DimensionError, Tensor

HIDDEN_WIDTH = 256
OMEGA_0 = 30.0


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of an input -> hidden... -> output network."""

    in_dim: int
    out_dim: int
    hidden: tuple = (HIDDEN_WIDTH, HIDDEN_WIDTH)
    omega0: float = OMEGA_0

    @property
    def dims(self):
        return (self.in_dim, *self.hidden, self.out_dim)

    @property
    def layer_shapes(self):
        d = self.dims
        return [((d[i], d[i + 1]), (d[i + 1],)) for i in range(len(d) - 1)]

    @property
    def param_names(self):
        names = []
        for i in range(len(self.dims) - 1):
            names += [f"W{i}", f"b{i}"]
        return names

    @property
    def param_shapes(self):
        shapes = []
        for ws, bs in self.layer_shapes:
            shapes += [ws, bs]
        return shapes

    @property
    def param_count(self):
        return int(sum(np.prod(s) for s in self.param_shapes))


@dataclass
class MlpParams:
    """Weights and biases of one MLP.

    Each weight is ``(in, out)`` or, for hypernetwork-generated batches,
    ``(B, in, out)``; biases are ``(out,)`` or ``(B, 1, out)``.
    """

    spec: MlpSpec
    weights: list
    biases: list

    def tensors(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def named(self):
        return dict(zip(self.spec.param_names, self.tensors()))

    @property
    def batched(self):
        return self.weights[0].ndim == 3


def siren_init(spec: MlpSpec, rng: np.random.Generator, dtype=np.float32):
    """Sitzmann-style initialization as plain arrays, keyed by parameter name."""
    out = {}
    dims = spec.dims
    for i in range(len(dims) - 1):
        fan_in = dims[i]
        if i == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / spec.omega0
        out[f"W{i}"] = rng.uniform(-bound, bound, size=(dims[i], dims[i + 1])).astype(dtype)
        bb = 1.0 / np.sqrt(fan_in)
        out[f"b{i}"] = rng.uniform(-bb, bb, size=(dims[i + 1],)).astype(dtype)
    return out


def mlp_params_from_arrays(spec: MlpSpec, arrays: dict, requires_grad=False):
    n = len(spec.dims) - 1
    ws = [Tensor(arrays[f"W{i}"], requires_grad=requires_grad, name=f"W{i}") for i in range(n)]
    bs = [Tensor(arrays[f"b{i}"], requires_grad=requires_grad, name=f"b{i}") for i in range(n)]
    return MlpParams(spec, ws, bs)


def _check_layer(params: MlpParams, i: int, x: Tensor):
    w = params.weights[i]
    if x.shape[-1] != w.shape[-2]:
        raise DimensionError(
            f"layer {i}: input width {x.shape[-1]} does not match weight rows {w.shape[-2]}"
        )


def mlp_forward(params: MlpParams, x):
    """Evaluate the network; returns ``(output, hidden_activations)``.

    Hidden layers apply ``sin(omega0 * (x @ W + b))``; the last layer is linear.
    For batched params, ``x`` is ``(B, N, in)`` (or ``(N, in)``, broadcast).
    """
    h = T.as_tensor(x)
    n = len(params.weights)
    hidden = []
    for i in range(n):
        _check_layer(params, i, h)
        z = T.matmul(h, params.weights[i]) + params.biases[i]
        if i < n - 1:
            h = T.sin(z * params.spec.omega0)
            hidden.append(h)
        else:
            h = z
    return h, hidden


def mlp_forward_with_input_grad(params: MlpParams, x):
    """Forward pass plus d(output[..., 0])/dx built from recorded ops.

    The input gradient is obtained by propagating the identity tangent through
    the chain (forward-mode), so it stays first-order differentiable w.r.t. the
    parameters without nested reverse passes.
    Returns ``(output, hidden, grad)`` with ``grad`` shaped ``x.shape``.
    """
    x = T.as_tensor(x)
    n = len(params.weights)
    om = params.spec.omega0
    h = x
    # tangent J: d h / d x, stored as (..., in_dim, width)
    jac = None
    hidden = []
    for i in range(n):
        _check_layer(params, i, h)
        w = params.weights[i]
        z = T.matmul(h, w) + params.biases[i]
        if jac is None:
            # first layer: dz/dx = W, broadcast over points
            jz = w if w.ndim == 2 else T.reshape(w, (w.shape[0], 1, *w.shape[1:]))
        elif w.ndim == 2:
            jz = T.matmul(jac, w)
        else:
            # (B, N, in, k) -> (B, N*in, k) keeps one GEMM per batch item
            B, N, d, k = jac.shape
            jz = T.reshape(T.matmul(T.reshape(jac, (B, N * d, k)), w), (B, N, d, w.shape[-1]))
        if i < n - 1:
            zs = z * om
            h = T.sin(zs)
            hidden.append(h)
            scale = T.cos(zs) * om
            # (..., 1, width) broadcast over the in_dim axis
            shp = scale.shape
            jac = jz * T.reshape(scale, (*shp[:-1], 1, shp[-1]))
        else:
            h = z
            jac = jz
    # jac: (..., in_dim, out_dim); take first output channel
    return h, hidden, jac[..., 0]


# -- hypernetworks ---------------------------------------------------------
@dataclass
class HyperNetParams:
    """Trunk MLP (ReLU) on the code plus one linear head per target tensor.

    Head weights are stored as ``(numel, trunk_width)``.
    """

    code_dim: int
    target: MlpSpec
    trunk_w: list
    trunk_b: list
    head_w: dict
    head_b: dict
    trunk_width: int = 128

    def tensors(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.trunk_w, self.trunk_b)):
            out[f"trunk.W{i}"] = w
            out[f"trunk.b{i}"] = b
        for name in self.target.param_names:
            out[f"head.{name}.W"] = self.head_w[name]
            out[f"head.{name}.b"] = self.head_b[name]
        return out

    @property
    def output_dim(self):
        return self.target.param_count


def init_hypernet(code_dim: int, target: MlpSpec, rng: np.random.Generator,
                  trunk_width=128, trunk_layers=2, head_scale=0.1, dtype=np.float32):
    """Heads start as ``bias = SIREN init of the target``, small random weights.

    ``head_scale`` sets the code-driven deviation relative to the SIREN weight
    magnitude of each target tensor.
    """
    dims = [code_dim] + [trunk_width] * trunk_layers
    trunk_w, trunk_b = [], []
    for i in range(trunk_layers):
        bound = np.sqrt(6.0 / dims[i])  # He-uniform for ReLU
        trunk_w.append(Tensor(rng.uniform(-bound, bound, (dims[i], dims[i + 1])).astype(dtype),
                              requires_grad=True))
        trunk_b.append(Tensor(np.zeros(dims[i + 1], dtype), requires_grad=True))
    base = siren_init(target, rng, dtype)
    head_w, head_b = {}, {}
    for name, shape in zip(target.param_names, target.param_shapes):
        numel = int(np.prod(shape))
        ref = float(np.abs(base[name]).max()) or 1.0
        bound = head_scale * ref / np.sqrt(trunk_width)
        head_w[name] = Tensor(rng.uniform(-bound, bound, (numel, trunk_width)).astype(dtype),
                              requires_grad=True)
        head_b[name] = Tensor(base[name].reshape(-1).copy(), requires_grad=True)
    return HyperNetParams(code_dim, target, trunk_w, trunk_b, head_w, head_b, trunk_width)


def hypernet_forward(h: HyperNetParams, code):
    """Map codes ``(k,)`` or ``(B, k)`` to target MLP parameters.

    A single code yields unbatched params; a batch of codes yields params with
    a leading batch axis (biases shaped ``(B, 1, out)`` for broadcasting over
    query points).
    """
    code = T.as_tensor(code)
    if code.shape[-1] != h.code_dim:
        raise ContractError(f"code width {code.shape[-1]} != hypernet conditioning width {h.code_dim}")
    single = code.ndim == 1
    z = T.reshape(code, (1, h.code_dim)) if single else code
    for w, b in zip(h.trunk_w, h.trunk_b):
        z = T.relu(T.matmul(z, w) + b)
    B = z.shape[0]
    weights, biases = [], []
    for name, shape in zip(h.target.param_names, h.target.param_shapes):
        flat = T.matmul_nt(z, h.head_w[name]) + h.head_b[name]
        if name.startswith("W"):
            out = T.reshape(flat, shape if single else (B, *shape))
            weights.append(out)
        else:
            out = T.reshape(flat, shape if single else (B, 1, *shape))
            biases.append(out)
    return MlpParams(h.target, weights, biases)


def flatten_params(params: MlpParams):
    """Concatenate generated tensors to ``(P,)`` or ``(B, P)``."""
    parts = []
    for t in params.tensors():
        if params.batched:
            parts.append(T.reshape(t, (t.shape[0], -1)))
        else:
            parts.append(T.reshape(t, (-1,)))
    return T.concat(parts, axis=-1)
