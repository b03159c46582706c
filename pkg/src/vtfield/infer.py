"""Inference by optimization: SE(2) pose from visuo-tactile clouds, trial code
from observed shear, then one contact forward pass. Plus an ICP baseline."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import ndiff as nd
from .fields.contact_field import contact_logits_split, pooled_shear
from .fields.model import FieldModel
from .fields.object_field import ObjectModel, reconstruct_mesh
from .fields.tactile_field import SENSORS, TRIAL_CODE_DIM, sensor_slice, shear_loss, tactile_forward
from .geom.sampling import sample_surface
from .ndiff.tensor import ContractError
from .sim import frames
from .sim.scene import get_tool
from .sim.tactile import GRID


class InferenceError(RuntimeError):
    pass


class BaselineError(RuntimeError):
    pass


@dataclass
class InferConfig:
    pose_steps: int = 250
    pose_lr: float = 5e-3
    pose_lr_min: float = 1e-4
    restarts: int = 3
    restart_threshold: float = 0.05
    restart_offset_deg: float = 10.0
    code_steps: int = 60
    code_lr: float = 3e-2
    epsilon: float = 0.5
    n_surface: int = 2000
    surface_tol: float = 0.02
    surface: str = "learned"
    recon_resolution: int = 128
    pose_from: str = "both"
    seed: int = 0


@dataclass
class Observation:
    tool: str
    visual: np.ndarray
    tactile: np.ndarray
    shear_left: np.ndarray
    shear_right: np.ndarray
    ee_pose: np.ndarray

    @classmethod
    def from_record(cls, r):
        return cls(r.tool, r.visual, r.tactile, r.shear_left, r.shear_right, r.ee_pose)

    def shear(self, sensor):
        return self.shear_left if sensor == "left" else self.shear_right


@dataclass
class PoseEstimate:
    xi: np.ndarray
    transform: np.ndarray
    residual: float
    steps: int
    restarts: int = 0
    history: list = field(default_factory=list)


# -- pose ---------------------------------------------------------------------
def project_se2_init(ee_pose, prior_pose):
    """``(x, z, theta)`` of ``prior_pose`` relative to the EE: y translation
    dropped, rotation reduced to its twist about EE y."""
    return frames.project_se2(frames.invert(ee_pose) @ prior_pose)


def _canonical_points(xi, pts_ee, norm):
    """Differentiable ``S * (Ry(theta)^T (p - (x, 0, z)) - center)``."""
    x, z, th = xi[0], xi[1], xi[2]
    c, s = nd.cos(th), nd.sin(th)
    dx = pts_ee[:, 0] - x
    dz = pts_ee[:, 2] - z
    ox = c * dx - s * dz
    oz = s * dx + c * dz
    oy = nd.Tensor(pts_ee[:, 1])
    n = pts_ee.shape[0]
    cols = [nd.reshape(v, (n, 1)) for v in (ox, oy, oz)]
    p = nd.concat(cols, axis=1)
    return (p - norm.center.astype(np.float32)) * float(norm.scale)


def pose_loss(obj: ObjectModel, z_o, norm, xi, clouds_ee):
    """Average over modalities of the mean |O| at the back-projected points."""
    params = obj.mlp(obj.resolve_code(z_o))
    total = None
    clouds = [c for c in clouds_ee if c is not None and len(c)]
    if not clouds:
        raise ContractError("pose estimation needs at least one nonempty cloud")
    for pts in clouds:
        q = _canonical_points(xi, pts.astype(np.float32), norm)
        o, _ = nd.mlp_forward(params, q)
        term = nd.mean(nd.absolute(o)) * (1.0 / len(clouds))
        total = term if total is None else total + term
    return total


def _select_clouds(obs: Observation, pose_from):
    inv = frames.invert(obs.ee_pose)
    vis = frames.apply(inv, obs.visual) if pose_from in ("both", "vision") else None
    tac = frames.apply(inv, obs.tactile) if pose_from in ("both", "tactile") else None
    for name, c in (("visual", vis), ("tactile", tac)):
        if c is not None and len(c) == 0:
            raise ContractError(f"empty {name} cloud")
    return [vis, tac]


def _optimize_pose(obj, z_o, norm, clouds, xi0, config):
    xi = nd.Tensor(np.asarray(xi0, dtype=np.float32), requires_grad=True)
    state = nd.AdamState(lr=config.pose_lr)
    history = []
    for step in range(config.pose_steps):
        loss = pose_loss(obj, z_o, norm, xi, clouds)
        value = loss.item()
        if not math.isfinite(value):
            raise InferenceError(f"non-finite pose loss at step {step}")
        history.append(value)
        nd.backward(loss)
        lr = nd.cosine_lr(step, config.pose_steps - 1, config.pose_lr, config.pose_lr_min)
        nd.adam_step(state, {"xi": xi}, lr=lr)
        xi.grad = None
    final = pose_loss(obj, z_o, norm, nd.Tensor(xi.data), clouds).item()
    return xi.data.astype(np.float64), final, history


def estimate_pose(model, tool, obs: Observation, config: InferConfig = None, xi_init=None):
    config = config or InferConfig()
    obj = model.obj if isinstance(model, FieldModel) else model
    norm = get_tool(tool).norm
    clouds = _select_clouds(obs, config.pose_from)
    if xi_init is None:
        # no prior object pose: the SE(2) projection of the EE pose itself
        xi_init = project_se2_init(obs.ee_pose, obs.ee_pose)
    xi_init = np.asarray(xi_init, dtype=np.float64)
    best = _optimize_pose(obj, tool, norm, clouds, xi_init, config)
    restarts = 0
    if best[1] > config.restart_threshold:
        off = np.deg2rad(config.restart_offset_deg)
        for k in range(config.restarts):
            # +off, -off, +2 off, ...
            mult = (k // 2 + 1) * (1 if k % 2 == 0 else -1)
            cand = _optimize_pose(obj, tool, norm, clouds, xi_init + np.array([0, 0, mult * off]), config)
            restarts += 1
            if cand[1] < best[1]:
                best = cand
    xi, residual, history = best
    X = obs.ee_pose @ frames.se2_pose(xi)
    return PoseEstimate(xi, X, residual, config.pose_steps, restarts, history)


# -- trial code -----------------------------------------------------------------
def shear_residual(model: FieldModel, xi, psi, shear_left, shear_right):
    """Mean of both sensors' shear losses; returns a Tensor."""
    g = GRID.normalized.astype(np.float32)
    xi_t = nd.as_tensor(np.asarray(xi, dtype=np.float32)) if not isinstance(xi, nd.Tensor) else xi
    total = None
    for s, obs in (("left", shear_left), ("right", shear_right)):
        pred = tactile_forward(model, s, xi_t, psi[sensor_slice(s)], g)
        term = shear_loss(pred, obs) * 0.5
        total = term if total is None else total + term
    return total


def infer_trial_code(model: FieldModel, xi_hat, shear_left, shear_right, config: InferConfig = None):
    """Adam on psi from zero; returns ``(psi_best, residual_best, history)``.

    The best iterate is kept, so the result never scores worse than the start.
    """
    config = config or InferConfig()
    psi = nd.Tensor(np.zeros(TRIAL_CODE_DIM, dtype=np.float32), requires_grad=True)
    state = nd.AdamState(lr=config.code_lr)
    history = []
    best_psi, best_val = psi.data.copy(), math.inf
    for step in range(config.code_steps):
        loss = shear_residual(model, xi_hat, psi, shear_left, shear_right)
        value = loss.item()
        if not math.isfinite(value):
            raise InferenceError(f"non-finite shear loss at step {step}")
        history.append(value)
        if value < best_val:
            best_val, best_psi = value, psi.data.copy()
        nd.backward(loss)
        nd.adam_step(state, {"psi": psi})
        psi.grad = None
    value = shear_residual(model, xi_hat, nd.Tensor(psi.data), shear_left, shear_right).item()
    if value < best_val:
        best_val, best_psi = value, psi.data.copy()
    return best_psi, best_val, history


# -- contact ------------------------------------------------------------------
@dataclass
class ContactPrediction:
    points: np.ndarray          # canonical, c > epsilon
    points_world: np.ndarray
    probs: np.ndarray
    all_points: np.ndarray
    all_probs: np.ndarray
    fallback: bool = False


def surface_samples(model: FieldModel, tool, n, rng, source="learned", resolution=128, tol=0.02):
    """Canonical surface points with ``|O| < tol``."""
    if source == "gt":
        mesh = get_tool(tool).canonical
    elif source == "learned":
        cache = model.obj._cache
        key = ("mesh", tool, resolution)
        if key not in cache:
            cache[key] = reconstruct_mesh(model.obj, tool, resolution)
        mesh = cache[key]
    else:
        raise ValueError(f"unknown surface source '{source}'")
    pts, _, _ = sample_surface(mesh, n, rng)
    s = model.obj.sdf(tool, pts)
    return pts[np.abs(s) < tol]


def contact_probabilities(model: FieldModel, tool, xi, psi, q):
    q = np.asarray(q, dtype=np.float32)
    xi_t = nd.Tensor(np.asarray(xi, dtype=np.float32))
    psi_t = nd.Tensor(np.asarray(psi, dtype=np.float32))
    g = GRID.normalized.astype(np.float32)
    if model.shear_input == "pooled":
        preds = [tactile_forward(model, s, xi_t, psi_t.data[sensor_slice(s)], g) for s in SENSORS]
        pooled = pooled_shear(preds[0], preds[1])
    else:
        pooled = nd.Tensor(np.zeros(4, dtype=np.float32))
    acts = model.obj.activations(tool, q) if model.use_acts else np.zeros((len(q), 512), np.float32)
    logits = contact_logits_split(model, np.concatenate([q, acts], axis=1), pooled, xi_t, psi_t)
    return 1.0 / (1.0 + np.exp(-logits.data.astype(np.float64)))


def predict_contact_patch(model: FieldModel, tool, xi_hat, psi_hat, ee_pose, config: InferConfig = None,
                          rng=None, surface_points=None):
    """Surface points with contact probability above ``epsilon``.

    If none passes the threshold the single most likely point is returned
    and ``fallback`` is set.
    """
    config = config or InferConfig()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    if surface_points is None:
        surface_points = surface_samples(model, tool, config.n_surface, rng, config.surface,
                                         config.recon_resolution, config.surface_tol)
    if len(surface_points) == 0:
        raise ContractError("no surface samples for contact prediction")
    probs = contact_probabilities(model, tool, xi_hat, psi_hat, surface_points)
    mask = probs > config.epsilon
    fallback = not mask.any()
    if fallback:
        mask = probs == probs.max()
    pts = surface_points[mask]
    norm = get_tool(tool).norm
    X = ee_pose @ frames.se2_pose(xi_hat)
    world = frames.apply(X, norm.to_metric(pts))
    return ContactPrediction(pts, world, probs[mask], surface_points, probs, fallback)


# -- full staged inference -------------------------------------------------------
@dataclass
class InferenceResult:
    pose: PoseEstimate
    psi: np.ndarray
    code_residual: float
    code_residual_init: float
    code_steps: int
    contact: ContactPrediction
    contact_passes: int
    timings: dict


def run_inference(model: FieldModel, obs: Observation, config: InferConfig = None, rng=None):
    """Pose, then trial code at the estimated pose, then one contact pass."""
    config = config or InferConfig()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    t0 = time.perf_counter()
    pose = estimate_pose(model, obs.tool, obs, config)
    t1 = time.perf_counter()
    psi, res, hist = infer_trial_code(model, pose.xi, obs.shear_left, obs.shear_right, config)
    t2 = time.perf_counter()
    contact = predict_contact_patch(model, obs.tool, pose.xi, psi, obs.ee_pose, config, rng)
    t3 = time.perf_counter()
    timings = {"pose": t1 - t0, "code": t2 - t1, "contact": t3 - t2}
    return InferenceResult(pose, psi, res, hist[0] if hist else res, len(hist), contact, 1, timings)


# -- ICP baseline ---------------------------------------------------------------
def kabsch(src, dst):
    """Least-squares rigid ``(R, t)`` with ``R @ src + t ~ dst``."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, S, Vt = np.linalg.svd(H)
    if S[0] <= 0 or S[1] <= 1e-12 * S[0]:
        raise BaselineError("rank-deficient correspondence covariance")
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ D @ U.T
    return R, cd - R @ cs


def icp_baseline(source, target, init_pose, max_iter=50, tol=1e-6):
    """Point-to-point ICP registering ``target`` (model frame) onto ``source``
    (world). Returns ``(pose, info)`` where ``pose`` maps model to world."""
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if len(source) == 0 or len(target) == 0:
        raise ContractError("ICP needs two nonempty clouds")
    tree = cKDTree(target)
    X = frames.invert(np.asarray(init_pose, dtype=np.float64))   # world -> model
    prev = math.inf
    it = 0
    rmse = math.inf
    for it in range(1, max_iter + 1):
        moved = frames.apply(X, source)
        d, idx = tree.query(moved)
        rmse = float(np.sqrt(np.mean(d ** 2)))
        R, t = kabsch(source, target[idx])
        X = frames.make_pose(R, t)
        if math.isfinite(prev) and abs(prev - rmse) <= tol * max(prev, 1e-12):
            break
        prev = rmse
    return frames.invert(X), {"iterations": it, "rmse": rmse}
