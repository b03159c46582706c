"""Object SDF conditioned on a per-tool latent code through a hypernetwork.

Pretrained auto-decoder style (codes are free parameters) and frozen
afterwards. Canonical coordinates are unit-sphere normalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import ndiff as nd
from ..geom.mc import largest_component, marching_cubes
from ..geom.mesh import TOOL_KINDS
from ..geom.sampling import QuerySet, sample_query_set
from ..ndiff import tensor as T
from ..ndiff.nn import HyperNetParams, MlpParams, MlpSpec
from ..sim.scene import get_tool

OBJECT_SPEC = MlpSpec(3, 1)
CODE_DIM = 8


class TrainingError(RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DegenerateNormalError(ValueError):
    pass


class ReconstructionError(RuntimeError):
    pass


@dataclass
class PretrainConfig:
    epochs: int = 2000
    lr: float = 1e-4
    lambda_normal: float = 0.01
    batch_sdf: int = 768        # near/off samples per tool per step
    batch_surface: int = 256    # on-surface samples per tool per step
    code_dim: int = CODE_DIM
    code_std: float = 0.01
    trunk_width: int = 128
    head_scale: float = 0.1
    seed: int = 0
    log_every: int = 100

    @classmethod
    def paper(cls, **kw):
        return cls(epochs=50000, lr=1e-5, **kw)


def _np_forward(weights, biases, x, omega0, want_hidden=False):
    """Plain-array forward for frozen evaluation."""
    h = x
    hidden = []
    n = len(weights)
    for i in range(n):
        z = h @ weights[i] + biases[i]
        if i < n - 1:
            h = np.sin(omega0 * z)
            if want_hidden:
                hidden.append(h)
        else:
            h = z
    return h, hidden


@dataclass
class ObjectModel:
    hyper: HyperNetParams
    codes: np.ndarray
    tools: list
    frozen: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def code(self, tool):
        return self.codes[self.tools.index(tool)]

    def freeze(self):
        for t in self.hyper.tensors().values():
            t.requires_grad = False
            t.grad = None
        self.frozen = True
        self._cache.clear()
        return self

    def mlp(self, z_o) -> MlpParams:
        """Generated SDF network for a code (constant tensors)."""
        z = np.asarray(z_o, dtype=np.float32)
        key = z.tobytes()
        if key not in self._cache:
            p = nd.hypernet_forward(self.hyper, nd.Tensor(z))
            ws = [nd.Tensor(w.data.copy()) for w in p.weights]
            bs = [nd.Tensor(b.data.copy()) for b in p.biases]
            self._cache[key] = MlpParams(p.spec, ws, bs)
        return self._cache[key]

    def resolve_code(self, z_o):
        return self.code(z_o) if isinstance(z_o, str) else np.asarray(z_o, dtype=np.float32)

    def sdf(self, z_o, q, chunk=65536):
        """Signed distance at canonical points, no gradient tracking."""
        p = self.mlp(self.resolve_code(z_o))
        ws = [w.data for w in p.weights]
        bs = [b.data for b in p.biases]
        q = np.asarray(q, dtype=np.float32).reshape(-1, 3)
        out = np.empty(len(q), dtype=np.float32)
        for s in range(0, len(q), chunk):
            o, _ = _np_forward(ws, bs, q[s:s + chunk], p.spec.omega0)
            out[s:s + chunk] = o[:, 0]
        return out

    def activations(self, z_o, q):
        """Concatenated hidden activations ``(N, 512)``."""
        p = self.mlp(self.resolve_code(z_o))
        ws = [w.data for w in p.weights]
        bs = [b.data for b in p.biases]
        _, hidden = _np_forward(ws, bs, np.asarray(q, dtype=np.float32), p.spec.omega0, True)
        return np.concatenate(hidden, axis=-1)

    # -- serialization ----------------------------------------------------
    def blobs(self):
        out = {f"H_O.{k}": v.data for k, v in self.hyper.tensors().items()}
        out["object_codes"] = self.codes
        return out

    def manifest(self):
        return {
            "sections": ["H_O", "object_codes"],
            "object": {
                "tools": list(self.tools),
                "code_dim": int(self.hyper.code_dim),
                "trunk_width": int(self.hyper.trunk_width),
                "trunk_layers": len(self.hyper.trunk_w),
                "target": [OBJECT_SPEC.in_dim, *OBJECT_SPEC.hidden, OBJECT_SPEC.out_dim],
                "omega0": OBJECT_SPEC.omega0,
            },
        }

    def save(self, path, extra=None):
        man = self.manifest()
        man.update(extra or {})
        return nd.write_checkpoint(path, man, self.blobs())

    @classmethod
    def from_blobs(cls, manifest, blobs):
        info = manifest["object"]
        hyper = hypernet_from_blobs(blobs, "H_O.", info["code_dim"], OBJECT_SPEC,
                                    info["trunk_layers"], info["trunk_width"])
        model = cls(hyper, np.asarray(blobs["object_codes"], dtype=np.float32), list(info["tools"]))
        return model.freeze()

    @classmethod
    def load(cls, path):
        manifest, blobs = nd.read_checkpoint(path)
        if "object" not in manifest:
            raise nd.CheckpointError(f"{path}: no object section")
        return cls.from_blobs(manifest, blobs)


def hypernet_from_blobs(blobs, prefix, code_dim, target, trunk_layers, trunk_width):
    tw = [nd.Tensor(blobs[f"{prefix}trunk.W{i}"]) for i in range(trunk_layers)]
    tb = [nd.Tensor(blobs[f"{prefix}trunk.b{i}"]) for i in range(trunk_layers)]
    hw = {n: nd.Tensor(blobs[f"{prefix}head.{n}.W"]) for n in target.param_names}
    hb = {n: nd.Tensor(blobs[f"{prefix}head.{n}.b"]) for n in target.param_names}
    return HyperNetParams(code_dim, target, tw, tb, hw, hb, trunk_width)


def object_forward(model: ObjectModel, z_o, q):
    """``(s, z_O)``: SDF values ``(N,)`` and hidden activations ``(N, 512)``.

    Differentiable w.r.t. ``q`` and, when passed as a Tensor, ``z_o``.
    """
    if isinstance(z_o, nd.Tensor):
        params = nd.hypernet_forward(model.hyper, z_o)
    else:
        params = model.mlp(model.resolve_code(z_o))
    out, hidden = nd.mlp_forward(params, q)
    return out[..., 0], nd.concat(hidden, axis=-1)


def surface_normal(model: ObjectModel, z_o, q, eps=1e-12):
    """Unit gradient of the SDF at canonical points, via reverse mode."""
    q_arr = np.asarray(q, dtype=np.float32)
    single = q_arr.ndim == 1
    qt = nd.Tensor(q_arr.reshape(-1, 3), requires_grad=True)
    s, _ = object_forward(model, z_o, qt)
    nd.backward(nd.tsum(s))
    g = qt.grad.astype(np.float64)
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    if np.any(norm < eps):
        raise DegenerateNormalError("SDF gradient vanishes at a query point")
    n = g / norm
    return n[0] if single else n


def sdf_loss(params: MlpParams, q_sdf, s_sdf, q_surf, n_surf, lambda_normal):
    """Returns ``(total, l1_term, normal_term)`` for batched generated params.

    ``q_sdf``/``s_sdf`` hold labelled samples (near, off and on-surface with
    s=0); the normal term compares the cosine of grad O with the label normal.
    """
    o1, _ = nd.mlp_forward(params, q_sdf)
    o2, _, g = nd.mlp_forward_with_input_grad(params, q_surf)
    n_total = o1.shape[0] * o1.shape[1] + o2.shape[0] * o2.shape[1]
    l1 = (nd.tsum(nd.absolute(o1[..., 0] - s_sdf)) + nd.tsum(nd.absolute(o2[..., 0]))) * (1.0 / n_total)
    dot = nd.tsum(g * n_surf, axis=-1)
    gnorm = nd.sqrt(nd.tsum(g * g, axis=-1) + 1e-12)
    normal = nd.mean(1.0 - dot / gnorm)
    return l1 + normal * lambda_normal, l1, normal


def tool_query_sets(tools, seed=0, counts=None):
    """Oracle-labelled query sets for each tool's canonical mesh, one
    independent stream per ``(seed, tool)``."""
    return {t: sample_query_set(get_tool(t).canonical, counts, seed=[seed, TOOL_KINDS.index(t)])
            for t in tools}


def pretrain_object(query_sets: dict, config: PretrainConfig = None, log=None) -> ObjectModel:
    """Fit the shared hypernetwork and one code per tool; returns a frozen model.

    Each step draws a fresh minibatch per tool from its query set.
    """
    config = config or PretrainConfig()
    tools = list(query_sets)
    rng = np.random.default_rng(config.seed)
    hyper = nd.init_hypernet(config.code_dim, OBJECT_SPEC, rng, trunk_width=config.trunk_width,
                             head_scale=config.head_scale)
    codes = nd.Tensor(rng.normal(0.0, config.code_std, (len(tools), config.code_dim)).astype(np.float32),
                      requires_grad=True, name="object_codes")
    params = dict(hyper.tensors())
    params["object_codes"] = codes
    state = nd.AdamState(lr=config.lr)
    pools = []
    for t in tools:
        qs = query_sets[t]
        on = np.flatnonzero(qs.band_mask("on") & np.all(np.isfinite(qs.n), axis=1))
        pools.append((qs, on, np.arange(len(qs))))
    history = []
    for epoch in range(config.epochs):
        xs, ss, xn, nn = [], [], [], []
        for qs, on, every in pools:
            a = rng.choice(on, config.batch_surface)
            b = rng.choice(every, config.batch_sdf)
            xn.append(qs.q[a])
            nn.append(qs.n[a])
            xs.append(qs.q[b])
            ss.append(qs.s[b])
        f32 = lambda v: np.asarray(v, dtype=np.float32)
        gen = nd.hypernet_forward(hyper, codes)
        loss, l1, ln = sdf_loss(gen, f32(xs), f32(ss), f32(xn), f32(nn), config.lambda_normal)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(f"object pretraining diverged at epoch {epoch}", epoch)
        nd.backward(loss)
        nd.adam_step(state, params)
        for p in params.values():
            p.grad = None
        history.append((value, l1.item(), ln.item()))
        if log is not None and (epoch % config.log_every == 0 or epoch == config.epochs - 1):
            log(f"epoch={epoch} loss={value:.6g} sdf={l1.item():.6g} normal={ln.item():.6g}")
    model = ObjectModel(hyper, codes.data.copy(), tools)
    model.freeze()
    model.history = history
    return model


def evaluate_sdf_loss(model: ObjectModel, tool, qs: QuerySet, lambda_normal=0.01, max_points=4000):
    """Full loss on (a prefix of) one tool's query set, no gradient w.r.t. params."""
    on = np.flatnonzero(qs.band_mask("on"))[:max_points]
    every = np.arange(len(qs))[:max_points]
    p = model.mlp(model.code(tool))
    batched = MlpParams(p.spec, [T.reshape(w, (1, *w.shape)) for w in p.weights],
                        [T.reshape(b, (1, 1, *b.shape)) for b in p.biases])
    f32 = lambda v: np.asarray(v, dtype=np.float32)[None]
    loss, l1, ln = sdf_loss(batched, f32(qs.q[every]), f32(qs.s[every]), f32(qs.q[on]),
                            f32(qs.n[on]), lambda_normal)
    return loss.item(), l1.item(), ln.item()


def reconstruct_mesh(model: ObjectModel, z_o, resolution=128, keep_largest=True):
    """Zero level set of the SDF over the canonical cube ``[-1, 1]^3``."""
    code = model.resolve_code(z_o)
    mesh = marching_cubes(lambda p: model.sdf(code, p), resolution=resolution)
    if mesh.is_empty:
        raise ReconstructionError("SDF has no zero crossing inside the canonical cube")
    return largest_component(mesh) if keep_largest else mesh
