"""Finite-difference verification of autodiff gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import Tensor


def grad_check(loss_fn: Callable[[], Tensor], store: ParamStore,
               n_probes: int = 50, seed: int = 0, h_rel: float = 1e-3) -> float:
    """Max relative error between autodiff and central differences.

    Probes n randomly chosen scalar parameters; loss_fn must be
    deterministic (fix its RNG). Relative error is
    |a - f| / max(|a|, |f|, 1e-8).
    """
    rng = np.random.default_rng(seed)
    store.zero_grads()
    loss = loss_fn()
    loss.backward()
    grads = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
             for name, t in store.params.items()}
    store.zero_grads()

    flat: list[tuple[str, tuple[int, ...]]] = []
    for name in store.names():
        for idx in np.ndindex(store.params[name].data.shape):
            flat.append((name, idx))
    order = rng.permutation(len(flat))[:n_probes]

    worst = 0.0
    for k in order:
        name, idx = flat[k]
        tensor = store.params[name]
        keep = tensor.data[idx]
        h = h_rel * max(abs(keep), 0.1)
        tensor.data[idx] = keep + h
        up = loss_fn().item()
        tensor.data[idx] = keep - h
        down = loss_fn().item()
        tensor.data[idx] = keep
        fd = (up - down) / (2.0 * h)
        ad = grads[name][idx]
        err = abs(ad - fd) / max(abs(ad), abs(fd), 1e-8)
        worst = max(worst, err)
    store.zero_grads()
    return worst
