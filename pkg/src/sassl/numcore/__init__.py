"""Dense tensor arithmetic and reverse-mode differentiation."""

from . import kernels
from .gradcheck import grad_check, numerical_grad
from .layers import Conv2d, Linear, Module
from .tensor import (
    ComputationRecord,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tensor,
    add,
    affine,
    as_tensor,
    avg_pool2d,
    backward,
    clip,
    concat,
    conv2d,
    diff_primitive_set,
    div,
    exp,
    getitem,
    global_avg_pool,
    grad_enabled,
    instance_stats,
    l2norm,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    precision,
    relu,
    reshape,
    resize_array,
    resize_bilinear,
    softplus,
    sub,
    sum_,
    transpose,
)

__all__ = [
    "kernels", "grad_check", "numerical_grad", "Conv2d", "Linear", "Module",
    "ComputationRecord", "NonFiniteError", "Parameter", "ShapeError", "Tensor",
    "add", "affine", "as_tensor", "avg_pool2d", "backward", "clip", "concat",
    "conv2d", "diff_primitive_set", "div", "exp", "getitem", "global_avg_pool",
    "grad_enabled", "instance_stats", "l2norm", "log", "matmul", "mean", "mul",
    "no_grad", "precision", "relu", "reshape", "resize_array", "resize_bilinear",
    "softplus", "sub", "sum_", "transpose",
]
