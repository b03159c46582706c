"""Metrics, per-scene evaluation and the ablation table."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fields.model import FieldModel
from .fields.object_field import reconstruct_mesh
from .geom.chamfer import chamfer_distance
from .geom.sampling import sample_surface
from .infer import (InferConfig, Observation, estimate_pose, icp_baseline, infer_trial_code,
                    predict_contact_patch, surface_samples)
from .sim import frames
from .sim.scene import get_tool


def wrap_angle(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def pose_errors(xi_hat, xi_star):
    """Translation error in mm over (x, z) and wrapped rotation error in degrees."""
    xi_hat = np.asarray(xi_hat, dtype=np.float64)
    xi_star = np.asarray(xi_star, dtype=np.float64)
    trans = 1000.0 * float(np.hypot(xi_hat[0] - xi_star[0], xi_hat[1] - xi_star[1]))
    rot = float(np.degrees(abs(wrap_angle(xi_hat[2] - xi_star[2]))))
    return trans, rot


def gt_contact_world(record):
    q = record.queries
    pos = q.q[q.c == 1]
    norm = get_tool(record.tool).norm
    return frames.apply(record.object_pose, norm.to_metric(pos))


def contact_cd(pred_world, record):
    """Chamfer distance between predicted and labelled contact points, both in
    world coordinates scaled by the tool's normalization factor."""
    s = get_tool(record.tool).norm.scale
    return chamfer_distance(s * np.asarray(pred_world), s * gt_contact_world(record))


def reconstruction_cd(obj, tool, resolution=128, n=30000, seed=0):
    rng = np.random.default_rng(seed)
    mesh = reconstruct_mesh(obj, tool, resolution)
    a, _, _ = sample_surface(get_tool(tool).canonical, n, rng)
    b, _, _ = sample_surface(mesh, n, rng)
    return chamfer_distance(a, b)


def icp_pose(model: FieldModel, record, n_target=5000, seed=0, resolution=128):
    """ICP of the observed visuo-tactile cloud against the reconstructed surface."""
    rng = np.random.default_rng(seed)
    norm = get_tool(record.tool).norm
    target = norm.to_metric(surface_samples(model, record.tool, n_target, rng, "learned", resolution, 1.0))
    source = np.concatenate([record.visual, record.tactile])
    init = record.ee_pose @ frames.se2_pose(np.zeros(3))
    X, info = icp_baseline(source, target, init)
    return frames.project_se2(frames.invert(record.ee_pose) @ X), info


def score_contact(model: FieldModel, record, xi_hat, config: InferConfig):
    """Trial code at ``xi_hat``, one contact pass and its CD against the labels.

    Returns ``(cd, prediction, code residual)``.
    """
    psi, residual, _ = infer_trial_code(model, xi_hat, record.shear_left, record.shear_right, config)
    rng = np.random.default_rng([config.seed, record.trial_index])
    pred = predict_contact_patch(model, record.tool, xi_hat, psi, record.ee_pose, config, rng)
    return contact_cd(pred.points_world, record), pred, residual


@dataclass
class SceneResult:
    tool: str
    trial: int
    xi_star: np.ndarray
    poses: dict = field(default_factory=dict)       # pose source -> xi_hat
    errors: dict = field(default_factory=dict)      # pose source -> (mm, deg)
    contact: dict = field(default_factory=dict)     # variant label -> CD
    residuals: dict = field(default_factory=dict)


def evaluate_scenes(models: dict, records, config: InferConfig = None, pose_sources=("both",),
                    contact_runs=(("full", "both"),), icp=False, log=None):
    """Evaluate each record.

    ``models`` maps variant name to a :class:`FieldModel` (``None`` if absent).
    ``contact_runs`` lists ``(variant, pose source)`` pairs to score for contact.
    Pose estimation uses the frozen object module of the ``full`` model, which
    all variants share.
    """
    config = config or InferConfig()
    base = models["full"]
    out = []
    for r in records:
        res = SceneResult(r.tool, r.trial_index, r.xi.copy())
        obs = Observation.from_record(r)
        for src in pose_sources:
            est = estimate_pose(base, r.tool, obs, replace(config, pose_from=src))
            res.poses[src] = est.xi
            res.errors[src] = pose_errors(est.xi, r.xi)
            res.residuals[f"pose.{src}"] = est.residual
        if icp:
            xi_icp, _ = icp_pose(base, r, seed=config.seed, resolution=config.recon_resolution)
            res.poses["icp"] = xi_icp
            res.errors["icp"] = pose_errors(xi_icp, r.xi)
        for variant, src in contact_runs:
            model = models.get(variant)
            if model is None:
                continue
            cd, _, residual = score_contact(model, r, res.poses[src], config)
            res.contact[f"{variant}@{src}"] = cd
            res.residuals[f"code.{variant}@{src}"] = residual
        out.append(res)
        if log is not None:
            log(f"scene tool={r.tool} trial={r.trial_index} "
                + " ".join(f"{k}={v[0]:.3f}mm/{v[1]:.3f}deg" for k, v in res.errors.items())
                + " " + " ".join(f"cd.{k}={v:.4f}" for k, v in res.contact.items()))
    return out


# -- reports ------------------------------------------------------------------
ABLATION_LABELS = {
    "full@both": "full",
    "full@vision": "V_pcd",
    "full@tactile": "T_pcd",
    "wo_acts@both": "wo_acts",
    "wo_obj_pose@both": "wo_obj_pose",
}


@dataclass
class MetricsReport:
    """Per-tool rows plus a mean row; columns are metric names."""

    columns: list
    rows: dict                     # tool -> {column: value}
    absent: list = field(default_factory=list)

    def mean(self):
        out = {}
        for c in self.columns:
            vals = [row[c] for row in self.rows.values() if c in row]
            out[c] = float(np.mean(vals)) if vals else math.nan
        return out

    def to_text(self):
        width = max([12] + [len(c) + 2 for c in self.columns])
        head = "tool".ljust(12) + "".join(c.rjust(width) for c in self.columns)
        lines = [head, "-" * len(head)]
        for tool in sorted(self.rows):
            lines.append(tool.ljust(12) + "".join(f"{self.rows[tool].get(c, math.nan):{width}.5g}"
                                                  for c in self.columns))
        lines.append("-" * len(head))
        m = self.mean()
        lines.append("mean".ljust(12) + "".join(f"{m[c]:{width}.5g}" for c in self.columns))
        if self.absent:
            lines.append("absent variants: " + ", ".join(self.absent))
        return "\n".join(lines) + "\n"

    def to_keyvalue(self):
        lines = []
        for tool in sorted(self.rows):
            lines.append(f"tool={tool} " + " ".join(f"{c}={self.rows[tool][c]:.9g}" for c in self.columns
                                                     if c in self.rows[tool]))
        m = self.mean()
        lines.append("tool=mean " + " ".join(f"{c}={m[c]:.9g}" for c in self.columns))
        for a in self.absent:
            lines.append(f"absent={a}")
        return "\n".join(lines) + "\n"


def build_report(results, recon=None, absent=()):
    by_tool = {}
    for r in results:
        by_tool.setdefault(r.tool, []).append(r)
    columns = []
    if recon:
        columns.append("recon_cd")
    rows = {}
    for tool, rs in by_tool.items():
        row = {}
        if recon:
            row["recon_cd"] = recon[tool]
        for src in rs[0].errors:
            row[f"trans_mm.{src}"] = float(np.mean([x.errors[src][0] for x in rs]))
            row[f"rot_deg.{src}"] = float(np.mean([x.errors[src][1] for x in rs]))
        for key in rs[0].contact:
            row[f"contact_cd.{ABLATION_LABELS.get(key, key)}"] = float(np.mean([x.contact[key] for x in rs]))
        rows[tool] = row
        for c in row:
            if c not in columns:
                columns.append(c)
    return MetricsReport(columns, rows, list(absent))


def ablation_suite(models: dict, records, config: InferConfig = None, variants=None, icp=False, log=None):
    """Contact CD for the full model under each pose source plus the
    retrained variants; variants missing from ``models`` are reported absent."""
    variants = variants or ["V_pcd", "T_pcd", "wo_acts", "wo_obj_pose"]
    sources = ["both"]
    runs = [("full", "both")]
    absent = []
    for v in variants:
        if v == "V_pcd":
            sources.append("vision")
            runs.append(("full", "vision"))
        elif v == "T_pcd":
            sources.append("tactile")
            runs.append(("full", "tactile"))
        else:
            if models.get(v) is None:
                absent.append(v)
            else:
                runs.append((v, "both"))
    results = evaluate_scenes(models, records, config, tuple(sources), tuple(runs), icp, log)
    return build_report(results, absent=absent), results
