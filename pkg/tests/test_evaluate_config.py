import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vtfield.config import ConfigError, apply_overrides, dump_config, load_config, parse_keyvalue
from vtfield.evaluate import MetricsReport, SceneResult, build_report, contact_cd, gt_contact_world, pose_errors, wrap_angle
from vtfield.infer import InferConfig
from vtfield.sim.scene import DELTA_PEN, get_tool
from vtfield.trainer import TrainingConfig


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -np.pi <= w < np.pi
    assert np.cos(w) == pytest.approx(np.cos(a), abs=1e-9)


def test_pose_errors_wrap_across_the_cut():
    mm, deg = pose_errors([0.003, 0.004, np.deg2rad(359.0)], [0.0, 0.0, 0.0])
    assert mm == pytest.approx(5.0)
    assert deg == pytest.approx(1.0)


def test_contact_cd_against_labels(small_records):
    r = small_records[0]
    gt = gt_contact_world(r)
    assert np.all(gt[:, 2] <= DELTA_PEN + 1e-6)
    assert contact_cd(gt, r) == 0.0
    s = get_tool(r.tool).norm.scale
    # a single predicted point: every label pairs with it, and it pairs with its nearest label
    p = gt.mean(axis=0) + [0.0, 0.0, 0.01]
    d2 = np.sum((s * (gt - p)) ** 2, axis=1)
    assert contact_cd(p[None], r) == pytest.approx(d2.mean() + d2.min(), rel=1e-9)


def test_report_means_and_layout():
    res = [SceneResult("hex", 0, np.zeros(3), errors={"both": (1.0, 2.0)}, contact={"full@both": 0.1}),
           SceneResult("hex", 1, np.zeros(3), errors={"both": (3.0, 4.0)}, contact={"full@both": 0.3}),
           SceneResult("pyramid", 2, np.zeros(3), errors={"both": (5.0, 0.0)}, contact={"full@both": 0.5})]
    rep = build_report(res, recon={"hex": 0.01, "pyramid": 0.03}, absent=["wo_acts"])
    assert rep.columns == ["recon_cd", "trans_mm.both", "rot_deg.both", "contact_cd.full"]
    assert rep.rows["hex"]["trans_mm.both"] == 2.0
    m = rep.mean()
    assert m["trans_mm.both"] == pytest.approx(3.5)
    assert m["contact_cd.full"] == pytest.approx(0.35)
    kv = rep.to_keyvalue().splitlines()
    assert kv[0].startswith("tool=hex recon_cd=0.01 ")
    assert kv[2].startswith("tool=mean ") and kv[3] == "absent=wo_acts"
    assert "absent variants: wo_acts" in rep.to_text()
    assert math.isnan(MetricsReport(["x"], {}).mean()["x"])


def test_parse_keyvalue():
    assert parse_keyvalue("a = 1\n# note\n\nb=x # trailing\n") == {"a": "1", "b": "x"}
    with pytest.raises(ConfigError):
        parse_keyvalue("just words")
    with pytest.raises(ConfigError):
        parse_keyvalue("=3")


def test_overrides_coerce_types():
    cfg = apply_overrides(TrainingConfig(), {"epochs": "7", "lr": "0.5", "variant": "wo_acts"})
    assert cfg.epochs == 7 and cfg.lr == 0.5 and cfg.variant == "wo_acts"
    with pytest.raises(ConfigError):
        apply_overrides(TrainingConfig(), {"epochs": "seven"})
    with pytest.raises(ConfigError):
        apply_overrides(TrainingConfig(), {"nope": "1"})


def test_dump_load_round_trip(tmp_path):
    cfg = InferConfig(pose_steps=9, surface="gt")
    p = tmp_path / "c.cfg"
    p.write_text(dump_config(cfg))
    assert load_config(p, InferConfig()) == cfg
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg", InferConfig())
