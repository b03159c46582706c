"""Second training stage: tactile and contact hypernetworks plus the
per-interaction trial codes, with the object module frozen."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import ndiff as nd
from .fields.contact_field import contact_logits_split, contact_loss_from_logits, pooled_shear
from .fields.model import FieldModel, init_field_model
from .fields.object_field import ObjectModel, TrainingError
from .fields.tactile_field import SENSORS, sensor_slice, shear_loss, tactile_condition
from .sim.tactile import GRID, augment_shear


@dataclass
class TrainingConfig:
    lambda_shear: float = 0.1
    lambda_emb: float = 0.2
    lambda_hyper: float = 25.0
    lambda_contact: float = 2.0
    epochs: int = 40
    lr: float = 1e-4
    code_lr: float = 1e-2
    batch: int = 8
    contact_points: int = 1000
    noise_sigma: float = 0.1
    trunk_width: int = 128
    head_scale: float = 0.1
    code_std: float = 0.1
    seed: int = 0
    variant: str = "full"
    shear_input: str = "pooled"

    @classmethod
    def paper(cls, **kw):
        base = dict(epochs=20, lr=1e-5, code_lr=1e-5, batch=1)
        base.update(kw)
        return cls(**base)

    @classmethod
    def desk(cls, **kw):
        """Single-core settings: narrower trunk, larger batches and a
        contact-point subsample per step."""
        base = dict(trunk_width=64, batch=16, contact_points=500)
        base.update(kw)
        return cls(**base)

    def validate(self):
        for k in ("lambda_shear", "lambda_emb", "lambda_hyper", "lambda_contact"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0")
        if self.batch < 1 or self.epochs < 0:
            raise ValueError("batch must be >= 1 and epochs >= 0")
        return self


def _sum_squares(params):
    total = None
    for t in params.tensors():
        s = nd.tsum(t * t)
        total = s if total is None else total + s
    return total


def hyper_regularizer(tactile_params, contact_params, batch_size=None):
    """Generated-weight penalty: per-parameter mean square of each sensor's
    tactile network (averaged over sensors) plus that of the contact network,
    averaged over the batch.

    ``tactile_params`` is a list of generated :class:`MlpParams` (one per sensor).
    """
    if batch_size is None:
        batch_size = contact_params.weights[0].shape[0] if contact_params.batched else 1
    p_t = tactile_params[0].spec.param_count
    p_c = contact_params.spec.param_count
    t_term = None
    for p in tactile_params:
        term = _sum_squares(p) * (1.0 / (p_t * len(tactile_params)))
        t_term = term if t_term is None else t_term + term
    c_term = _sum_squares(contact_params) * (1.0 / p_c)
    return (t_term + c_term) * (1.0 / batch_size)


def embedding_loss(psi):
    """Squared norm of the trial code; a batch ``(B, 12)`` gives the batch mean."""
    psi = nd.as_tensor(psi)
    b = psi.shape[0] if psi.ndim == 2 else 1
    return nd.tsum(psi * psi) * (1.0 / b)


@dataclass
class StepLosses:
    shear: float
    emb: float
    hyper: float
    contact: float
    total: float


def joint_loss(model: FieldModel, records, psi, config: TrainingConfig, rng, contact_idx=None):
    """Weighted loss on a batch of records with trial codes ``psi`` (B, 12).

    Returns ``(total tensor, components dict of tensors)``.
    """
    B = len(records)
    xi = nd.Tensor(np.stack([r.xi for r in records]).astype(np.float32))
    g = GRID.normalized.astype(np.float32)
    preds, gen_t, l_shear = {}, [], None
    for s in SENSORS:
        obs = np.stack([r.shear(s) for r in records])
        if config.noise_sigma > 0:
            obs = augment_shear(obs, rng, config.noise_sigma)
        cond = tactile_condition(xi, psi[:, sensor_slice(s)], model.use_pose)
        params = nd.hypernet_forward(model.H_T[s], cond)
        gen_t.append(params)
        pred, _ = nd.mlp_forward(params, g)
        preds[s] = pred
        term = shear_loss(pred, obs) * 0.5
        l_shear = term if l_shear is None else l_shear + term

    qs, labels, acts = [], [], []
    for k, r in enumerate(records):
        idx = contact_idx[k] if contact_idx is not None else slice(None)
        q = r.queries.q[idx].astype(np.float32)
        qs.append(q)
        labels.append(r.queries.c[idx])
        if model.use_acts:
            acts.append(model.obj.activations(r.tool, q))
        else:
            acts.append(np.zeros((len(q), 512), dtype=np.float32))
    if model.shear_input == "pooled":
        pooled = pooled_shear(preds["left"], preds["right"])
    else:
        pooled = nd.Tensor(np.zeros((B, 4), dtype=np.float32))
    base = np.concatenate([np.stack(qs), np.stack(acts)], axis=-1)
    logits, gen_c = contact_logits_split(model, base, pooled, xi, psi, return_params=True)
    l_contact = contact_loss_from_logits(logits, np.stack(labels))
    l_emb = embedding_loss(psi)
    l_hyper = hyper_regularizer(gen_t, gen_c, B)
    total = (l_shear * config.lambda_shear + l_emb * config.lambda_emb
             + l_hyper * config.lambda_hyper + l_contact * config.lambda_contact)
    return total, {"shear": l_shear, "emb": l_emb, "hyper": l_hyper, "contact": l_contact}


def format_epoch_log(epoch, losses: StepLosses):
    return (f"epoch={epoch} shear={losses.shear:.6g} emb={losses.emb:.6g} hyper={losses.hyper:.6g} "
            f"contact={losses.contact:.6g} total={losses.total:.6g}")


def train_joint(records, obj: ObjectModel, config: TrainingConfig = None, log=None):
    """Train H_T (both sensors), H_C and the trial-code table.

    ``records`` must be in trial-index order. Returns ``(model, history)``
    where history holds per-epoch mean losses.
    """
    config = (config or TrainingConfig()).validate()
    rng = np.random.default_rng(config.seed)
    model = init_field_model(obj, len(records), rng, config.trunk_width, config.head_scale,
                             config.code_std, config.variant, config.shear_input)
    model.meta = {k: v for k, v in asdict(config).items()}
    params = model.trainable()
    state = nd.AdamState(lr=config.lr)
    code_state = nd.RowAdamState(lr=config.code_lr)
    history = []
    n = len(records)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = np.zeros(5)
        steps = 0
        for start in range(0, n, config.batch):
            rows = np.sort(order[start:start + config.batch])
            batch = [records[i] for i in rows]
            cidx = None
            if config.contact_points < min(len(r.queries) for r in batch):
                cidx = [rng.choice(len(r.queries), config.contact_points, replace=False) for r in batch]
            psi = nd.Tensor(model.trial_codes[rows].copy(), requires_grad=True)
            total, parts = joint_loss(model, batch, psi, config, rng, cidx)
            value = total.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, interactions {rows.tolist()}", epoch)
            nd.backward(total)
            nd.adam_step(state, params)
            nd.row_adam_step(code_state, model.trial_codes, rows, psi.grad, name="trial_code_table")
            for p in params.values():
                p.grad = None
            sums += [parts["shear"].item(), parts["emb"].item(), parts["hyper"].item(),
                     parts["contact"].item(), value]
            steps += 1
        mean = sums / max(steps, 1)
        losses = StepLosses(*mean.tolist())
        history.append(losses)
        if log is not None:
            log(format_epoch_log(epoch, losses))
    model.freeze()
    return model, history


def recompute_total(losses: StepLosses, config: TrainingConfig):
    return (config.lambda_shear * losses.shear + config.lambda_emb * losses.emb
            + config.lambda_hyper * losses.hyper + config.lambda_contact * losses.contact)
