"""Minimal dense-tensor compute core with reverse-mode differentiation."""
from .tensor import (
    Parameter,
    Tensor,
    debug_nan_enabled,
    default_dtype,
    precision,
    set_debug_nan,
    set_default_dtype,
)
from .ops import (
    BatchNormState,
    add,
    batchnorm_nd,
    bias_add,
    conv2d,
    dense,
    dropout,
    global_avgpool,
    max_over_axis,
    maxpool2x2,
    relu,
    reshape,
    scale,
    sigmoid_binary_cross_entropy,
    softmax_cross_entropy,
    transpose,
)
from .optim import Optimizer, OptimizerConfig

__all__ = [
    "Tensor",
    "Parameter",
    "precision",
    "set_default_dtype",
    "default_dtype",
    "set_debug_nan",
    "debug_nan_enabled",
    "conv2d",
    "bias_add",
    "relu",
    "add",
    "scale",
    "reshape",
    "transpose",
    "dropout",
    "maxpool2x2",
    "max_over_axis",
    "global_avgpool",
    "dense",
    "BatchNormState",
    "batchnorm_nd",
    "softmax_cross_entropy",
    "sigmoid_binary_cross_entropy",
    "Optimizer",
    "OptimizerConfig",
]
