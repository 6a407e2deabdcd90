"""Adam with bias correction over a ParamStore."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import MissingGradient
from .params import ParamStore, _quantize


def adam_step(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              names: Iterable[str] | None = None) -> None:
    """One update on the named parameters (all by default); zeroes grads.

    Moments and step counts are tracked per parameter, so stepping a
    subset (e.g. decoder-only passes) leaves the rest untouched. Updated
    values and moments are quantized to float32.
    """
    selected = sorted(names) if names is not None else store.names()
    for name in selected:
        tensor = store.params[name]
        if tensor.grad is None:
            raise MissingGradient(f"no gradient for parameter {name!r}")
        g = tensor.grad
        t = store.opt_t.get(name, 0) + 1
        m = store.opt_m.get(name)
        v = store.opt_v.get(name)
        if m is None:
            m = np.zeros_like(tensor.data)
            v = np.zeros_like(tensor.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        tensor.data = _quantize(tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps))
        store.opt_m[name] = _quantize(m)
        store.opt_v[name] = _quantize(v)
        store.opt_t[name] = t
    store.zero_grads()
