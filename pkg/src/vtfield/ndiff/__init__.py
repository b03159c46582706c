"""Minimal reverse-mode autodiff, sine MLPs, hypernetworks and Adam."""
from .tensor import (
    ContractError,
    DimensionError,
    Tensor,
    absolute,
    as_tensor,
    backward,
    clip,
    concat,
    cos,
    exp,
    log,
    matmul,
    matmul_nt,
    broadcast_to,
    getitem,
    mean,
    relu,
    reshape,
    sigmoid,
    sin,
    sqrt,
    tsum,
)
from .nn import (
    HyperNetParams,
    MlpParams,
    MlpSpec,
    flatten_params,
    hypernet_forward,
    init_hypernet,
    mlp_forward,
    mlp_forward_with_input_grad,
    mlp_params_from_arrays,
    siren_init,
)
from .optim import AdamState, OptimizerError, RowAdamState, adam_step, cosine_lr, row_adam_step
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .gradcheck import analytic_grads, max_relative_error, probe_gradients, to_float64
