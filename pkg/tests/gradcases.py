"""Loss functions paired with the tensors to differentiate, in float64, for
finite-difference checks. Shared by the unit and acceptance suites."""
import numpy as np

from vtfield import ndiff as nd
from vtfield.fields.contact_field import (CONTACT_IN, contact_logits, contact_loss,
                                          contact_loss_from_logits)
from vtfield.fields.model import init_field_model
from vtfield.fields.object_field import OBJECT_SPEC, ObjectModel, object_forward, sdf_loss
from vtfield.fields.tactile_field import SENSORS, shear_loss, tactile_forward
from vtfield.infer import Observation, _canonical_points, _select_clouds, pose_loss, shear_residual
from vtfield.sim.scene import get_tool
from vtfield.sim.tactile import GRID
from vtfield.trainer import TrainingConfig, joint_loss

POSE_TOL = 1e-3
TOL = 1e-4


def small_object(tools, seed=0, trunk_width=16):
    rng = np.random.default_rng(seed)
    hyper = nd.init_hypernet(8, OBJECT_SPEC, rng, trunk_width=trunk_width)
    codes = rng.normal(0, 0.01, (len(tools), 8))
    obj = ObjectModel(hyper, codes.astype(np.float64), list(tools))
    nd.to_float64(list(hyper.tensors().values()))
    return obj.freeze()


def small_field(records, seed=0, trunk_width=16, variant="full"):
    obj = small_object(sorted({r.tool for r in records}), seed, trunk_width)
    model = init_field_model(obj, len(records), np.random.default_rng(seed + 1), trunk_width=trunk_width,
                             variant=variant)
    nd.to_float64(list(model.trainable().values()))
    model.trial_codes = model.trial_codes.astype(np.float64)
    return model


def _trainable(tensors):
    for t in tensors:
        t.requires_grad = True
    return tensors


def case_sdf_loss(rng):
    obj = small_object(["hex", "cylinder"])
    tensors = _trainable(list(obj.hyper.tensors().values()))
    codes = nd.Tensor(obj.codes.copy(), requires_grad=True)
    q_sdf = rng.uniform(-1, 1, (2, 40, 3))
    s_sdf = rng.normal(0, 0.2, (2, 40))
    q_surf = rng.uniform(-1, 1, (2, 20, 3))
    n_surf = rng.normal(size=(2, 20, 3))
    n_surf /= np.linalg.norm(n_surf, axis=-1, keepdims=True)

    def loss():
        params = nd.hypernet_forward(obj.hyper, codes)
        return sdf_loss(params, q_sdf, s_sdf, q_surf, n_surf, 0.01)[0]
    return loss, tensors + [codes], TOL, None


def case_object_query(rng):
    obj = small_object(["hex"])
    q = nd.Tensor(rng.uniform(-1, 1, (30, 3)), requires_grad=True)
    w = rng.normal(size=30)

    def loss():
        s, _ = object_forward(obj, "hex", q)
        return nd.tsum(s * w)
    return loss, [q], TOL, None


def case_shear(rng, records):
    model = small_field(records)
    xi = nd.Tensor(np.asarray(records[0].xi, dtype=np.float64), requires_grad=True)
    psi = nd.Tensor(rng.normal(0, 0.1, 12), requires_grad=True)
    g = nd.Tensor(GRID.normalized[::7].astype(np.float64), requires_grad=True)
    obs = {s: records[0].shear(s)[::7] for s in SENSORS}
    params = _trainable(list(model.H_T["left"].tensors().values()) + list(model.H_T["right"].tensors().values()))

    def loss():
        total = None
        for k, s in enumerate(SENSORS):
            pred = tactile_forward(model, s, xi, psi[6 * k:6 * k + 6], g)
            term = shear_loss(pred, obs[s])
            total = term if total is None else total + term
        return total
    return loss, params + [xi, psi, g], TOL, None


def case_contact(rng, records, clamped=False):
    model = small_field(records)
    r = records[0]
    idx = rng.choice(len(r.queries), 40, replace=False)
    q = r.queries.q[idx]
    acts = model.obj.activations(r.tool, q)
    pooled = rng.normal(0, 0.5, (len(q), 4))
    inputs = nd.Tensor(np.concatenate([q, acts, pooled], axis=1).astype(np.float64), requires_grad=True)
    assert inputs.shape[1] == CONTACT_IN
    xi = nd.Tensor(np.asarray(r.xi, dtype=np.float64), requires_grad=True)
    psi = nd.Tensor(rng.normal(0, 0.1, 12), requires_grad=True)
    labels = r.queries.c[idx]
    params = _trainable(list(model.H_C.tensors().values()))

    def loss():
        logits = contact_logits(model, inputs, xi, psi)
        if clamped:
            return contact_loss(nd.sigmoid(logits), labels)
        return contact_loss_from_logits(logits, labels)
    return loss, params + [xi, psi, inputs], TOL, None


def case_joint(rng, records, variant="full"):
    model = small_field(records, variant=variant)
    params = list(model.trainable().values())
    psi = nd.Tensor(model.trial_codes[:len(records)].copy(), requires_grad=True)
    config = TrainingConfig(noise_sigma=0.0)
    cidx = [rng.choice(len(r.queries), 30, replace=False) for r in records]

    def loss():
        return joint_loss(model, records, psi, config, None, cidx)[0]
    return loss, params + [psi], TOL, None


def case_code_inference(rng, records):
    model = small_field(records)
    r = records[0]
    xi = nd.Tensor(np.asarray(r.xi, dtype=np.float64), requires_grad=True)
    psi = nd.Tensor(rng.normal(0, 0.1, 12), requires_grad=True)

    def loss():
        return shear_residual(model, xi, psi, r.shear_left, r.shear_right)
    return loss, [xi, psi], TOL, None


def case_pose(rng, records):
    r = records[0]
    obj = small_object([r.tool])
    norm = get_tool(r.tool).norm
    clouds = _select_clouds(Observation.from_record(r), "both")
    clouds = [c[rng.choice(len(c), min(len(c), 60), replace=False)].astype(np.float64) for c in clouds]
    xi = nd.Tensor(np.asarray(r.xi, dtype=np.float64) + rng.normal(0, [0.002, 0.002, 0.02]),
                   requires_grad=True)

    def loss():
        return pose_loss(obj, r.tool, norm, xi, clouds)

    def signs(v):
        t = nd.Tensor(v)
        out = []
        for pts in clouds:
            out.append(np.sign(obj.sdf(r.tool, _canonical_points(t, pts, norm).data)))
        return np.concatenate(out)

    def accept(t, i, h):
        # reject probes where some |O| term changes sign inside [x-h, x+h]
        up = t.data.copy()
        up.reshape(-1)[i] += h
        dn = t.data.copy()
        dn.reshape(-1)[i] -= h
        return np.array_equal(signs(up), signs(dn))
    return loss, [xi], POSE_TOL, accept


CASES = {
    "object sdf loss (params, codes)": lambda rng, recs: case_sdf_loss(rng),
    "object field (q)": lambda rng, recs: case_object_query(rng),
    "tactile shear loss (params, xi, psi, g)": case_shear,
    "contact loss from logits (params, xi, psi, q)": case_contact,
    "contact clamped bce (params, xi, psi, q)": lambda rng, recs: case_contact(rng, recs, clamped=True),
    "joint loss full (params, psi)": case_joint,
    "joint loss wo_obj_pose (params, psi)": lambda rng, recs: case_joint(rng, recs, "wo_obj_pose"),
    "trial-code residual (xi, psi)": case_code_inference,
    "pose loss (xi)": case_pose,
}


def run_case(factory, rng, records, n_probes=20, h=1e-6, max_instances=40):
    """Probe until ``n_probes`` comparisons are collected, drawing fresh random
    instances when one has fewer usable entries. Returns ``(probes, tol)``."""
    probes, tol = [], None
    for _ in range(max_instances):
        loss, tensors, tol, accept = factory(rng, records)
        probes += nd.probe_gradients(loss, tensors, n_probes - len(probes), rng, h=h,
                                     min_rel_magnitude=1e-2, accept=accept)
        if len(probes) >= n_probes:
            break
    return probes, tol
