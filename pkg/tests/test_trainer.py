import copy
import re

import numpy as np
import pytest

from gradcases import small_field, small_object
from vtfield import ndiff as nd
from vtfield.fields.contact_field import contact_condition
from vtfield.fields.object_field import TrainingError
from vtfield.fields.tactile_field import SENSORS, sensor_slice, tactile_condition
from vtfield.trainer import (StepLosses, TrainingConfig, embedding_loss, format_epoch_log, hyper_regularizer,
                             joint_loss, recompute_total, train_joint)


def generated(model, B=3, seed=0):
    rng = np.random.default_rng(seed)
    xi = rng.normal(0, 0.01, (B, 3))
    psi = rng.normal(0, 0.1, (B, 12))
    gen_t = [nd.hypernet_forward(model.H_T[s], tactile_condition(xi, psi[:, sensor_slice(s)])) for s in SENSORS]
    gen_c = nd.hypernet_forward(model.H_C, contact_condition(xi, psi))
    return gen_t, gen_c


def test_hyper_regularizer_matches_loop(small_records):
    model = small_field(small_records)
    gen_t, gen_c = generated(model)
    B = 3

    def mean_square(p, b):
        arrays = [w.data[b] for w in p.weights] + [bb.data[b] for bb in p.biases]
        flat = np.concatenate([a.ravel() for a in arrays])
        assert len(flat) == p.spec.param_count
        return np.mean(flat ** 2)

    expected = np.mean([0.5 * (mean_square(gen_t[0], b) + mean_square(gen_t[1], b)) + mean_square(gen_c, b)
                        for b in range(B)])
    assert hyper_regularizer(gen_t, gen_c, B).item() == pytest.approx(expected, rel=1e-10)


def test_hyper_regularizer_zero_for_null_heads(small_records):
    model = small_field(small_records)
    for hn in [model.H_T["left"], model.H_T["right"], model.H_C]:
        for t in list(hn.head_w.values()) + list(hn.head_b.values()):
            t.data[...] = 0.0
    gen_t, gen_c = generated(model)
    assert hyper_regularizer(gen_t, gen_c).item() == 0.0


def test_embedding_loss():
    psi = np.arange(24, dtype=np.float64).reshape(2, 12) / 10
    assert embedding_loss(psi).item() == pytest.approx(np.sum(psi ** 2) / 2)
    assert embedding_loss(psi[0]).item() == pytest.approx(np.sum(psi[0] ** 2))


def test_joint_loss_is_weighted_sum(small_records):
    model = small_field(small_records)
    cfg = TrainingConfig(noise_sigma=0.0)
    psi = nd.Tensor(model.trial_codes.copy())
    total, parts = joint_loss(model, small_records, psi, cfg, np.random.default_rng(0))
    losses = StepLosses(*(parts[k].item() for k in ("shear", "emb", "hyper", "contact")), total.item())
    assert recompute_total(losses, cfg) == pytest.approx(losses.total, rel=1e-10)
    # one unit of shear error per grid point averaged over both sensors bounds the shear term
    assert 0 <= losses.shear <= 2 * np.sqrt(2)


def test_log_format():
    line = format_epoch_log(3, StepLosses(0.5, 0.25, 1e-3, 0.6931, 1.7))
    assert re.fullmatch(r"epoch=3 shear=\S+ emb=\S+ hyper=\S+ contact=\S+ total=\S+", line)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(lambda_hyper=-1).validate()
    with pytest.raises(ValueError):
        TrainingConfig(batch=0).validate()
    assert TrainingConfig.desk().trunk_width == 64
    assert TrainingConfig.paper().lr == 1e-5


def tiny_config(**kw):
    base = dict(epochs=25, lr=1e-3, code_lr=1e-2, batch=2, trunk_width=16, contact_points=200, noise_sigma=0.0)
    base.update(kw)
    return TrainingConfig(**base)


def test_training_descends_and_leaves_object_untouched(small_records):
    obj = small_object(sorted({r.tool for r in small_records}))
    before = {k: v.copy() for k, v in obj.blobs().items()}
    lines = []
    model, hist = train_joint(small_records, obj, tiny_config(), log=lines.append)
    assert len(hist) == 25 and len(lines) == 25
    assert hist[-1].total < hist[0].total
    assert hist[-1].contact < hist[0].contact
    for k, v in obj.blobs().items():
        np.testing.assert_array_equal(v, before[k])
    assert model.trial_codes.shape == (2, 12)
    assert all(not t.requires_grad for t in model.trainable().values())


def test_training_is_deterministic(small_records):
    obj = small_object(sorted({r.tool for r in small_records}))
    a, _ = train_joint(small_records, obj, tiny_config(epochs=3))
    b, _ = train_joint(small_records, obj, tiny_config(epochs=3))
    for k, v in a.blobs().items():
        np.testing.assert_array_equal(b.blobs()[k], v)


def test_only_batch_rows_of_code_table_move(small_records):
    obj = small_object(sorted({r.tool for r in small_records}))
    cfg = tiny_config(epochs=1, batch=1)
    init, _ = train_joint(small_records, obj, tiny_config(epochs=0))
    # with batch 1 each row is touched exactly once per epoch, so both move
    trained, _ = train_joint(small_records, obj, cfg)
    assert np.all(np.any(trained.trial_codes != init.trial_codes, axis=1))
    # a zero code learning rate leaves the whole table at its initial draw
    frozen, _ = train_joint(small_records, obj, tiny_config(epochs=1, code_lr=0.0))
    np.testing.assert_array_equal(frozen.trial_codes, init.trial_codes)


def test_non_finite_loss_raises(small_records):
    obj = small_object(sorted({r.tool for r in small_records}))
    bad = [copy.copy(r) for r in small_records]
    bad[0].shear_left = np.full_like(bad[0].shear_left, np.nan)
    with pytest.raises(TrainingError):
        train_joint(bad, obj, tiny_config(epochs=1))
