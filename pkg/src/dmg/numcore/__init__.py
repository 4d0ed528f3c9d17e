"""Minimal reverse-mode autodiff engine and recurrent kernels."""

from .cells import GRUWeights, LSTMWeights, gru_cell, lstm_cell
from .optim import Adam, Moments, adam_step
from .rng import make_rng, uniform_init
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    blend,
    concat,
    exp,
    getitem,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    pick,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    sum,
    sum_unordered,
    take_rows,
    tanh,
)

__all__ = [
    "Adam", "GRUWeights", "LSTMWeights", "Moments", "Tape", "Tensor", "adam_step", "add",
    "as_tensor", "backward", "blend", "concat", "exp", "getitem", "gru_cell", "log",
    "log_softmax", "lstm_cell", "make_rng", "matmul", "mean", "mul", "no_grad", "pick",
    "reshape", "sigmoid", "softmax", "stack", "sub", "sum", "sum_unordered", "take_rows", "tanh", "uniform_init",
]
