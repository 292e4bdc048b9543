"""Reverse-mode differentiable compute core (2-D float64 tensors + tape)."""

from .kernels import active_backend
from .optim import Adam, TrainingError, adam_step, clip_global_norm, init_uniform
from .tensor import (
    ShapeError,
    Tensor,
    abs_,
    add,
    backward,
    clear_tape,
    col_slice,
    concat_cols,
    concat_rows,
    const,
    cos,
    elu,
    gru_cell,
    leaky_relu,
    linear,
    matmul,
    mul,
    no_grad,
    param,
    relu,
    reshape,
    rows_dot,
    scale,
    segment_softmax,
    segment_sum,
    softmax,
    sub,
    sum_all,
    sum_cols,
    take_per_row,
    take_rows,
    tape_size,
)

__all__ = [
    "active_backend",
    "Adam",
    "TrainingError",
    "adam_step",
    "clip_global_norm",
    "init_uniform",
    "ShapeError",
    "Tensor",
    "abs_",
    "add",
    "backward",
    "clear_tape",
    "col_slice",
    "concat_cols",
    "concat_rows",
    "const",
    "cos",
    "elu",
    "gru_cell",
    "leaky_relu",
    "linear",
    "matmul",
    "mul",
    "no_grad",
    "param",
    "relu",
    "reshape",
    "rows_dot",
    "scale",
    "segment_softmax",
    "segment_sum",
    "softmax",
    "sub",
    "sum_all",
    "sum_cols",
    "take_per_row",
    "take_rows",
    "tape_size",
]
