import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from gradcases import small_field
from vtfield import ndiff as nd
from vtfield.geom.sdf import unsigned_distance
from vtfield.infer import (BaselineError, InferConfig, Observation, _canonical_points, estimate_pose,
                           icp_baseline, infer_trial_code, kabsch, pose_loss, predict_contact_patch,
                           project_se2_init, run_inference, shear_residual, surface_samples)
from vtfield.ndiff.tensor import ContractError
from vtfield.sim import frames
from vtfield.sim.scene import get_tool

FAST = InferConfig(pose_steps=6, code_steps=5, n_surface=300, surface="gt")


@given(st.floats(-0.01, 0.01), st.floats(-0.01, 0.01), st.floats(-0.5, 0.5), st.floats(-0.02, 0.02))
def test_project_se2_init_recovers_planar_offset(x, z, t, y):
    ee = frames.make_pose(frames.rot_z(0.7) @ frames.rot_x(np.pi), np.array([0.1, 0.2, 0.3]))
    rel = frames.se2_pose([x, z, t])
    rel[1, 3] = y  # the out-of-plane offset is dropped
    np.testing.assert_allclose(project_se2_init(ee, ee @ rel), [x, z, t], atol=1e-12)
    np.testing.assert_allclose(project_se2_init(ee, ee), 0.0, atol=1e-12)


def test_canonical_points_match_matrix_form():
    norm = get_tool("hex").norm
    rng = np.random.default_rng(0)
    pts = rng.normal(0, 0.02, (10, 3))
    xi = np.array([0.003, -0.002, 0.2])
    got = _canonical_points(nd.Tensor(xi), pts, norm).data
    expected = norm.to_canonical(frames.apply(frames.invert(frames.se2_pose(xi)), pts))
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_pose_loss_needs_a_cloud(small_records):
    model = small_field(small_records)
    with pytest.raises(ContractError):
        pose_loss(model.obj, "hex", get_tool("hex").norm, nd.Tensor(np.zeros(3)), [None, np.zeros((0, 3))])


def test_estimate_pose_counts_and_restarts(small_records):
    model = small_field(small_records)
    obs = Observation.from_record(small_records[0])
    est = estimate_pose(model, "hex", obs, InferConfig(pose_steps=7, restart_threshold=1e9))
    assert est.steps == 7 and len(est.history) == 7 and est.restarts == 0
    est = estimate_pose(model, "hex", obs, InferConfig(pose_steps=7, restart_threshold=-1.0))
    assert est.restarts == 3
    np.testing.assert_allclose(est.transform, obs.ee_pose @ frames.se2_pose(est.xi))
    for src in ("vision", "tactile"):
        assert np.isfinite(estimate_pose(model, "hex", obs, InferConfig(pose_steps=3, pose_from=src)).residual)


def test_trial_code_never_worse_than_start(small_records):
    model = small_field(small_records)
    r = small_records[1]
    psi, res, hist = infer_trial_code(model, r.xi, r.shear_left, r.shear_right, InferConfig(code_steps=20))
    assert len(hist) == 20
    assert res <= hist[0]
    again = shear_residual(model, r.xi, nd.Tensor(psi), r.shear_left, r.shear_right).item()
    assert again == pytest.approx(res, rel=1e-9)


def test_trial_code_with_zero_shear(small_records):
    model = small_field(small_records)
    z = np.zeros((600, 2))
    psi, res, _ = infer_trial_code(model, np.zeros(3), z, z, InferConfig(code_steps=5))
    assert np.all(np.isfinite(psi)) and np.isfinite(res)


def test_contact_patch_threshold_and_fallback(small_records):
    model = small_field(small_records)
    r = small_records[0]
    rng = np.random.default_rng(0)
    pts = surface_samples(model, "hex", 200, rng, "gt")
    psi = np.zeros(12)
    everything = predict_contact_patch(model, "hex", r.xi, psi, r.ee_pose,
                                       InferConfig(epsilon=-1.0), surface_points=pts)
    assert len(everything.points) == len(pts) and not everything.fallback
    X = r.ee_pose @ frames.se2_pose(r.xi)
    np.testing.assert_allclose(everything.points_world, frames.apply(X, get_tool("hex").norm.to_metric(pts)))
    none = predict_contact_patch(model, "hex", r.xi, psi, r.ee_pose, InferConfig(epsilon=1.0),
                                 surface_points=pts)
    assert none.fallback and len(none.points) >= 1
    assert none.probs.max() == everything.probs.max()


def test_surface_samples_sources(small_records):
    model = small_field(small_records)
    pts = surface_samples(model, "hex", 100, np.random.default_rng(0), "gt", tol=10.0)
    assert unsigned_distance(get_tool("hex").canonical, pts).max() < 1e-12
    with pytest.raises(ValueError):
        surface_samples(model, "hex", 10, np.random.default_rng(0), "mesh")


def test_run_inference_stages(small_records):
    model = small_field(small_records)
    res = run_inference(model, Observation.from_record(small_records[0]), FAST)
    assert res.pose.steps == 6 and len(res.pose.history) == 6
    assert res.code_steps == 5 and res.contact_passes == 1
    assert set(res.timings) == {"pose", "code", "contact"}


@given(st.integers(0, 1000))
def test_kabsch_recovers_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=seed).as_matrix()
    t = rng.normal(size=3)
    src = rng.normal(size=(20, 3))
    R_hat, t_hat = kabsch(src, src @ R.T + t)
    np.testing.assert_allclose(R_hat, R, atol=1e-9)
    np.testing.assert_allclose(t_hat, t, atol=1e-9)


def test_kabsch_degenerate():
    line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    with pytest.raises(BaselineError):
        kabsch(line, line)


def box_cloud(rng, n=3000):
    pts = rng.uniform(-1, 1, (n, 3)) * [0.02, 0.015, 0.04]
    axis = rng.integers(0, 3, n)
    pts[np.arange(n), axis] = np.sign(rng.normal(size=n)) * np.array([0.02, 0.015, 0.04])[axis]
    return pts


def test_icp_recovers_small_perturbation():
    rng = np.random.default_rng(0)
    model_pts = box_cloud(rng)
    X_true = frames.make_pose(frames.rot_z(0.4) @ frames.rot_x(0.2), np.array([0.3, -0.1, 0.2]))
    source = frames.apply(X_true, model_pts[:800])
    init = X_true @ frames.make_pose(frames.rot_y(0.05), np.array([0.002, -0.001, 0.001]))
    X, info = icp_baseline(source, model_pts, init)
    np.testing.assert_allclose(X, X_true, atol=1e-8)
    assert info["rmse"] < 1e-8
    X, info = icp_baseline(source, model_pts, X_true)
    np.testing.assert_allclose(X, X_true, atol=1e-12)
    with pytest.raises(ContractError):
        icp_baseline(np.zeros((0, 3)), model_pts, X_true)
