"""Minimal dense tensor engine with reverse-mode automatic differentiation."""

from .params import Parameter, ParameterStore, check_gradient, fan_in_uniform
from .rng import SplitRng
from .tensor import (
    Tensor,
    abs_,
    add,
    broadcast_to,
    concat,
    div,
    eye,
    grad_enabled,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    sigmoid,
    slice_axis,
    stack,
    sub,
    sum_,
    swap_last2,
    take,
    tanh,
    topk_row_mask,
    transpose,
    zeros,
)

__all__ = [
    "Parameter",
    "ParameterStore",
    "SplitRng",
    "Tensor",
    "abs_",
    "add",
    "broadcast_to",
    "check_gradient",
    "concat",
    "div",
    "eye",
    "fan_in_uniform",
    "grad_enabled",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "relu",
    "reshape",
    "sigmoid",
    "slice_axis",
    "stack",
    "sub",
    "sum_",
    "swap_last2",
    "take",
    "tanh",
    "topk_row_mask",
    "transpose",
    "zeros",
]
