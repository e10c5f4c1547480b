"""Minimal reverse-mode autodiff over rank-4 float tensors."""

from .optim import AdamState, adam_step
from .ops import (
    absolute,
    add,
    add_scalar,
    arccos,
    avgpool2,
    clamp,
    concat_channels,
    conv2d,
    div,
    forward_diff_x,
    forward_diff_y,
    layer_norm,
    lrelu,
    mean,
    mul,
    pow_elementwise,
    resize_nearest2x,
    scale,
    sigmoid,
    sqrt,
    sub,
    sum_channels,
    sum_sq_norm,
)
from .tensor import Tape, Tensor, active_tape

__all__ = [
    "AdamState",
    "Tape",
    "Tensor",
    "absolute",
    "active_tape",
    "adam_step",
    "add",
    "add_scalar",
    "arccos",
    "avgpool2",
    "clamp",
    "concat_channels",
    "conv2d",
    "div",
    "forward_diff_x",
    "forward_diff_y",
    "layer_norm",
    "lrelu",
    "mean",
    "mul",
    "pow_elementwise",
    "resize_nearest2x",
    "scale",
    "sigmoid",
    "sqrt",
    "sub",
    "sum_channels",
    "sum_sq_norm",
]
