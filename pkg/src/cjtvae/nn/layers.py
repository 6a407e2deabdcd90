"""Set-GRU cell for tree message passing.

The "previous state" is a pooled set of incoming messages rather than a
sequence state: the update gate sees the message sum, the candidate
state sees messages gated by per-message reset gates. The output is
invariant to message order, and an empty set behaves like one zero
message.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .params import ParamStore
from .tensor import Tensor, add, add_n, const, matvec, mul, scale, sigmoid, sub, tanh


def init_gru(store: ParamStore, prefix: str, input_dim: int, hidden_dim: int,
             rng: np.random.Generator) -> None:
    shapes = {
        "wz": (hidden_dim, input_dim), "uz": (hidden_dim, hidden_dim),
        "wr": (hidden_dim, input_dim), "ur": (hidden_dim, hidden_dim),
        "wh": (hidden_dim, input_dim), "uh": (hidden_dim, hidden_dim),
    }
    for key, shape in shapes.items():
        bound = float(np.sqrt(6.0 / sum(shape)))
        store.register(f"{prefix}/{key}", rng.uniform(-bound, bound, shape))


class GRUCell:
    def __init__(self, store: ParamStore, prefix: str):
        self.wz = store[f"{prefix}/wz"]
        self.uz = store[f"{prefix}/uz"]
        self.wr = store[f"{prefix}/wr"]
        self.ur = store[f"{prefix}/ur"]
        self.wh = store[f"{prefix}/wh"]
        self.uh = store[f"{prefix}/uh"]
        self.hidden_dim = self.uz.data.shape[0]

    def __call__(self, x: Tensor, messages: Sequence[Tensor]) -> Tensor:
        return gru_cell(self, x, messages)


def gru_cell(cell: GRUCell, x: Tensor, messages: Sequence[Tensor]) -> Tensor:
    hidden = cell.hidden_dim
    if messages:
        # canonical summation order makes the output bit-identical under
        # any permutation of the message set, not merely close
        ordered = sorted(messages, key=lambda m: m.data.tobytes())
        pooled = add_n(ordered)
        gated = []
        for m in ordered:
            r = sigmoid(add(matvec(cell.wr, x), matvec(cell.ur, m)))
            gated.append(mul(r, m))
        reset_pool = add_n(gated)
        z = sigmoid(add(matvec(cell.wz, x), matvec(cell.uz, pooled)))
        cand = tanh(add(matvec(cell.wh, x), matvec(cell.uh, reset_pool)))
    else:
        pooled = const(np.zeros(hidden))
        z = sigmoid(matvec(cell.wz, x))
        cand = tanh(matvec(cell.wh, x))
    one = const(np.ones(hidden))
    return add(mul(sub(one, z), pooled), mul(z, cand))
