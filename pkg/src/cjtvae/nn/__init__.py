"""Numeric core: autodiff tensors, parameter store, optimizer, grad check."""

from .tensor import (
    Tensor,
    add,
    aggregate,
    matmul_t,
    row_mean,
    add_n,
    bce_with_logits,
    clip,
    concat,
    const,
    cross_entropy,
    dot,
    exp,
    kl_standard_normal,
    linear,
    log_softmax,
    matvec,
    mean_of,
    mul,
    pick,
    relu,
    reparameterize,
    row,
    scale,
    sigmoid,
    softmax,
    stack_scalars,
    sub,
    sum_squared,
    tanh,
    tmean,
    tsum,
    vecmat,
    zeros,
)
from .params import ParamStore
from .optim import adam_step
from .gradcheck import grad_check
from .layers import GRUCell, gru_cell

__all__ = [
    "Tensor", "ParamStore", "adam_step", "grad_check", "GRUCell", "gru_cell",
    "add", "add_n", "aggregate", "matmul_t", "row_mean", "bce_with_logits", "clip", "concat", "const",
    "cross_entropy", "dot", "exp", "kl_standard_normal", "linear",
    "log_softmax", "matvec", "mean_of", "mul", "pick", "relu",
    "reparameterize", "row", "scale", "sigmoid", "softmax", "stack_scalars", "sub",
    "sum_squared", "tanh", "tmean", "tsum", "vecmat", "zeros",
]
