import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vtfield import ndiff as nd
from vtfield.ndiff.nn import MlpSpec


def test_square_derivative():
    x = nd.Tensor(np.array(3.0), requires_grad=True)
    nd.backward(x * x)
    assert float(x.grad) == 6.0


def test_backward_rejects_non_scalar():
    x = nd.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(nd.ContractError):
        nd.backward(x * 2.0)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_sin_product_matches_central_difference(w, x):
    wt = nd.Tensor(np.array(w, dtype=np.float64), requires_grad=True)
    nd.backward(nd.sin(wt * x))
    h = 1e-4
    num = (math.sin((w + h) * x) - math.sin((w - h) * x)) / (2 * h)
    assert abs(float(wt.grad) - num) <= 1e-5 * max(1.0, abs(num))


def _float64_ops():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 5))
    b = rng.normal(size=(5, 3))
    return {
        "matmul": (lambda A, B: nd.tsum(nd.sin(nd.matmul(A, B))), a, b),
        "matmul_nt": (lambda A, B: nd.tsum(nd.matmul_nt(A, B.T) ** 2), a, b.T.copy().T),
        "broadcast mul/div": (lambda A, B: nd.tsum(A / (nd.exp(B[:, :1].T) + 1.0) * 3.0), a, b),
        "sigmoid log": (lambda A, B: nd.mean(nd.log(nd.sigmoid(A) + 0.5)) + nd.tsum(nd.cos(B)), a, b),
        "concat reshape": (lambda A, B: nd.tsum(nd.reshape(nd.concat([A, B.T], axis=0), (-1,)) ** 3), a, b),
        "sqrt clip": (lambda A, B: nd.tsum(nd.sqrt(A * A + 1.0)) + nd.tsum(nd.clip(B, -0.5, 0.5) * B), a, b),
        "mean axis": (lambda A, B: nd.tsum(nd.mean(A, axis=0) * nd.mean(B, axis=1)[:1]), a, b),
    }


@pytest.mark.parametrize("name", list(_float64_ops()))
def test_op_gradients_match_finite_differences(name):
    fn, a, b = _float64_ops()[name]
    A = nd.Tensor(a.copy(), requires_grad=True)
    B = nd.Tensor(b.copy(), requires_grad=True)
    probes = nd.probe_gradients(lambda: fn(A, B), [A, B], 10, np.random.default_rng(1), h=1e-6)
    assert nd.max_relative_error(probes) < 1e-5


def test_zero_weight_mlp_outputs_bias():
    spec = MlpSpec(3, 2)
    arrays = {n: np.zeros(s, np.float32) for n, s in zip(spec.param_names, spec.param_shapes)}
    arrays["b2"] = np.array([0.3, -0.7], np.float32)
    out, hidden = nd.mlp_forward(nd.mlp_params_from_arrays(spec, arrays), np.ones((4, 3), np.float32))
    np.testing.assert_array_equal(out.data, np.tile([0.3, -0.7], (4, 1)).astype(np.float32))
    assert len(hidden) == 2 and all(np.all(h.data == 0) for h in hidden)


def test_identity_single_layer():
    spec = MlpSpec(3, 3, hidden=())
    p = nd.mlp_params_from_arrays(spec, {"W0": np.eye(3, dtype=np.float32), "b0": np.zeros(3, np.float32)})
    out, _ = nd.mlp_forward(p, np.array([[1.0, 2.0, 3.0]], np.float32))
    np.testing.assert_array_equal(out.data, [[1.0, 2.0, 3.0]])


def test_mlp_matches_straight_line_chain():
    spec = MlpSpec(5, 2)
    rng = np.random.default_rng(3)
    arrays = nd.siren_init(spec, rng, dtype=np.float64)
    x = rng.uniform(-1, 1, (7, 5))
    out, hidden = nd.mlp_forward(nd.mlp_params_from_arrays(spec, arrays), x)
    h1 = np.sin(30.0 * (x @ arrays["W0"] + arrays["b0"]))
    h2 = np.sin(30.0 * (h1 @ arrays["W1"] + arrays["b1"]))
    ref = h2 @ arrays["W2"] + arrays["b2"]
    np.testing.assert_allclose(out.data, ref, rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose(hidden[1].data, h2, rtol=1e-6, atol=1e-12)


def test_mlp_dimension_error_names_layer():
    spec = MlpSpec(3, 1)
    p = nd.mlp_params_from_arrays(spec, nd.siren_init(spec, np.random.default_rng(0)))
    with pytest.raises(nd.DimensionError, match="layer 0"):
        nd.mlp_forward(p, np.ones((2, 4), np.float32))


def test_hypernet_parameter_counts():
    # 9->256->256->2: 9*256+256 + 256*256+256 + 256*2+2
    assert MlpSpec(9, 2).param_count == 68866
    assert MlpSpec(2, 2).param_count == 2 * 256 + 256 + 256 * 256 + 256 + 256 * 2 + 2
    h = nd.init_hypernet(9, MlpSpec(9, 2), np.random.default_rng(0), trunk_width=8)
    flat = nd.flatten_params(nd.hypernet_forward(h, np.zeros(9, np.float32)))
    assert flat.shape == (68866,)


def test_hypernet_constant_heads_ignore_code():
    spec = MlpSpec(2, 2)
    h = nd.init_hypernet(4, spec, np.random.default_rng(0), trunk_width=8)
    for w in h.head_w.values():
        w.data[:] = 0
    a = nd.flatten_params(nd.hypernet_forward(h, np.ones(4, np.float32))).data
    b = nd.flatten_params(nd.hypernet_forward(h, -np.ones(4, np.float32))).data
    np.testing.assert_array_equal(a, b)


def test_hypernet_distinct_codes_give_distinct_params():
    h = nd.init_hypernet(4, MlpSpec(2, 2), np.random.default_rng(0), trunk_width=8)
    a = nd.flatten_params(nd.hypernet_forward(h, np.ones(4, np.float32))).data
    b = nd.flatten_params(nd.hypernet_forward(h, np.full(4, 0.5, np.float32))).data
    assert np.linalg.norm(a - b) > 0


def test_hypernet_code_width_checked():
    h = nd.init_hypernet(4, MlpSpec(2, 2), np.random.default_rng(0), trunk_width=8)
    with pytest.raises(nd.ContractError):
        nd.hypernet_forward(h, np.ones(5, np.float32))


def test_hypernet_mlp_composite_gradients():
    rng = np.random.default_rng(5)
    h = nd.init_hypernet(4, MlpSpec(2, 1), rng, trunk_width=8)
    tensors = nd.to_float64(list(h.tensors().values()))
    code = nd.Tensor(rng.normal(size=4), requires_grad=True)
    x = rng.uniform(-0.5, 0.5, (10, 2))

    def loss():
        out, _ = nd.mlp_forward(nd.hypernet_forward(h, code), x)
        return nd.mean(out * out)
    probes = nd.probe_gradients(loss, tensors + [code], 10, rng)
    assert len(probes) == 10 and nd.max_relative_error(probes) < 1e-4


def test_batched_hypernet_matches_single():
    h = nd.init_hypernet(4, MlpSpec(2, 2), np.random.default_rng(0), trunk_width=8)
    codes = np.random.default_rng(1).normal(size=(3, 4)).astype(np.float32)
    x = np.random.default_rng(2).uniform(-0.5, 0.5, (6, 2)).astype(np.float32)
    batched, _ = nd.mlp_forward(nd.hypernet_forward(h, codes), x)
    for i in range(3):
        single, _ = nd.mlp_forward(nd.hypernet_forward(h, codes[i]), x)
        np.testing.assert_allclose(batched.data[i], single.data, rtol=1e-5, atol=1e-6)


def test_input_grad_matches_reverse_mode():
    spec = MlpSpec(3, 1)
    rng = np.random.default_rng(0)
    p = nd.mlp_params_from_arrays(spec, nd.siren_init(spec, rng, np.float64))
    x = nd.Tensor(rng.uniform(-1, 1, (5, 3)), requires_grad=True)
    out, _, g = nd.mlp_forward_with_input_grad(p, x)
    nd.backward(nd.tsum(out))
    np.testing.assert_allclose(g.data, x.grad, rtol=1e-10, atol=1e-12)


# -- optimizer -------------------------------------------------------------------
def test_adam_zero_gradient_is_fixed_point():
    p = nd.Tensor(np.arange(5, dtype=np.float32))
    before = p.data.copy()
    state = nd.AdamState(lr=0.1)
    for _ in range(3):
        nd.adam_step(state, {"p": p}, {"p": np.zeros(5)})
    np.testing.assert_array_equal(p.data, before)
    assert state.step == 3


def test_adam_first_step_closed_form():
    g = np.array([0.5, -2.0, 1e-3, 0.0])
    p = nd.Tensor(np.zeros(4, dtype=np.float64))
    nd.adam_step(nd.AdamState(lr=0.01), {"p": p}, {"p": g})
    # m_hat = g, v_hat = g^2 after bias correction
    np.testing.assert_allclose(p.data, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-9, atol=1e-15)


def test_adam_converges_on_quadratic():
    c = np.array([1.0, -2.0, 0.5])
    x = nd.Tensor(np.zeros(3), requires_grad=True)
    state = nd.AdamState(lr=0.1)
    for _ in range(100):
        diff = x - c
        nd.backward(nd.tsum(diff * diff))
        nd.adam_step(state, {"x": x})
        x.grad = None
    assert np.linalg.norm(x.data - c) < 1e-2


def test_adam_rejects_non_finite_gradient():
    p = nd.Tensor(np.zeros(3))
    with pytest.raises(nd.OptimizerError) as e:
        nd.adam_step(nd.AdamState(), {"weights": p}, {"weights": np.array([0.0, np.nan, 1.0])})
    assert e.value.param_name == "weights"


def test_row_adam_touches_only_given_rows():
    table = np.ones((5, 3), np.float32)
    state = nd.RowAdamState(lr=0.1)
    nd.row_adam_step(state, table, [1, 3], np.ones((2, 3), np.float32))
    np.testing.assert_array_equal(table[[0, 2, 4]], 1.0)
    assert np.all(table[[1, 3]] < 1.0)


def test_cosine_lr_endpoints_and_midpoint():
    assert nd.cosine_lr(0, 100, 5e-3, 1e-4) == pytest.approx(5e-3)
    assert nd.cosine_lr(100, 100, 5e-3, 1e-4) == pytest.approx(1e-4)
    assert nd.cosine_lr(50, 100, 5e-3, 1e-4) == pytest.approx((5e-3 + 1e-4) / 2)
    lrs = [nd.cosine_lr(s, 100, 5e-3, 1e-4) for s in range(101)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


# -- checkpoints -------------------------------------------------------------------
def test_checkpoint_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    blobs = {"a.W": rng.normal(size=(4, 3)).astype(np.float32), "b": np.arange(5, dtype=np.float32)}
    nd.write_checkpoint(tmp_path / "x.ckpt", {"k": 1}, blobs)
    man, back = nd.read_checkpoint(tmp_path / "x.ckpt")
    assert man["k"] == 1 and man["blobs"] == {"a.W": [4, 3], "b": [5]}
    for k in blobs:
        assert back[k].tobytes() == blobs[k].tobytes()
    nd.write_checkpoint(tmp_path / "y.ckpt", {"k": 1}, blobs)
    assert (tmp_path / "x.ckpt").read_bytes() == (tmp_path / "y.ckpt").read_bytes()


def test_checkpoint_errors(tmp_path):
    with pytest.raises(nd.CheckpointError):
        nd.read_checkpoint(tmp_path / "missing.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(b"not a zip")
    with pytest.raises(nd.CheckpointError):
        nd.read_checkpoint(tmp_path / "bad.ckpt")
