"""Dense tensors with reverse-mode autodiff on a per-forward tape.

Arithmetic runs in float64 so finite-difference checks resolve at 1e-4;
parameters are quantized to float32 at rest (see params.py). Every op
verifies its output is finite and raises NumericFault otherwise.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NumericFault, ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "name")

    def __init__(self, data, parents: tuple["Tensor", ...] = (),
                 backward_fn: Callable[[np.ndarray], None] | None = None,
                 name: str = ""):
        if type(data) is np.ndarray and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        # a non-finite entry makes the sum non-finite; one reduction is
        # much cheaper than isfinite() over every element
        if not np.isfinite(self.data.sum()):
            raise NumericFault(f"non-finite values in tensor {name or '<anon>'}")
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse pass from a scalar; accumulates into leaf .grad."""
        if self.data.shape != ():
            raise ShapeMismatch("backward() starts from a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones(()))
        for node in reversed(topo):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"


def const(values) -> Tensor:
    return Tensor(values)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def _same_shape(a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b)
    out = Tensor(a.data + b.data, (a, b))
    out.backward_fn = lambda g: (a._accumulate(g), b._accumulate(g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b)
    out = Tensor(a.data - b.data, (a, b))
    out.backward_fn = lambda g: (a._accumulate(g), b._accumulate(-g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b)
    out = Tensor(a.data * b.data, (a, b))
    out.backward_fn = lambda g: (a._accumulate(g * b.data),
                                 b._accumulate(g * a.data))
    return out


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s, (a,))
    out.backward_fn = lambda g: a._accumulate(g * s)
    return out


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ShapeMismatch("add_n of nothing")
    for t in tensors[1:]:
        _same_shape(tensors[0], t)
    out = Tensor(sum(t.data for t in tensors), tuple(tensors))

    def bwd(g):
        for t in tensors:
            t._accumulate(g)
    out.backward_fn = bwd
    return out


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if w.data.ndim != 2 or x.data.ndim != 1 or w.data.shape[1] != x.data.shape[0]:
        raise ShapeMismatch(f"matvec of {w.data.shape} and {x.data.shape}")
    out = Tensor(w.data @ x.data, (w, x))
    out.backward_fn = lambda g: (w._accumulate(np.outer(g, x.data)),
                                 x._accumulate(w.data.T @ g))
    return out


def vecmat(q: Tensor, m: Tensor) -> Tensor:
    """Row vector times matrix: soft selection over the rows of m."""
    if q.data.ndim != 1 or m.data.ndim != 2 or q.data.shape[0] != m.data.shape[0]:
        raise ShapeMismatch(f"vecmat of {q.data.shape} and {m.data.shape}")
    out = Tensor(q.data @ m.data, (q, m))
    out.backward_fn = lambda g: (q._accumulate(m.data @ g),
                                 m._accumulate(np.outer(q.data, g)))
    return out


def matmul_t(a: Tensor, w: Tensor) -> Tensor:
    """Batched linear map: rows of a through w, i.e. a @ w.T."""
    if a.data.ndim != 2 or w.data.ndim != 2 or a.data.shape[1] != w.data.shape[1]:
        raise ShapeMismatch(f"matmul_t of {a.data.shape} and {w.data.shape}")
    out = Tensor(a.data @ w.data.T, (a, w))
    out.backward_fn = lambda g: (a._accumulate(g @ w.data),
                                 w._accumulate(g.T @ a.data))
    return out


def aggregate(m: np.ndarray, x: Tensor) -> Tensor:
    """Fixed 0/1 row-aggregation matrix applied to x's rows: m @ x."""
    if x.data.ndim != 2 or m.shape[1] != x.data.shape[0]:
        raise ShapeMismatch(f"aggregate of {m.shape} and {x.data.shape}")
    out = Tensor(m @ x.data, (x,))
    out.backward_fn = lambda g: x._accumulate(m.T @ g)
    return out


def row_mean(x: Tensor) -> Tensor:
    """Mean over rows of a matrix, yielding a vector."""
    if x.data.ndim != 2:
        raise ShapeMismatch("row_mean expects a matrix")
    n = x.data.shape[0]
    out = Tensor(x.data.mean(axis=0), (x,))
    out.backward_fn = lambda g: x._accumulate(np.tile(g / n, (n, 1)))
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b)
    out = Tensor(np.dot(a.data, b.data), (a, b))
    out.backward_fn = lambda g: (a._accumulate(g * b.data),
                                 b._accumulate(g * a.data))
    return out


def linear(w: Tensor, x: Tensor, b: Tensor | None = None) -> Tensor:
    out = matvec(w, x)
    return add(out, b) if b is not None else out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), (x,))
    out.backward_fn = lambda g: x._accumulate(g * mask)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    out = Tensor(s, (x,))
    out.backward_fn = lambda g: x._accumulate(g * s * (1.0 - s))
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = Tensor(t, (x,))
    out.backward_fn = lambda g: x._accumulate(g * (1.0 - t * t))
    return out


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    out = Tensor(e, (x,))
    out.backward_fn = lambda g: x._accumulate(g * e)
    return out


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp with pass-through gradient strictly inside the range."""
    inside = (x.data > lo) & (x.data < hi)
    out = Tensor(np.clip(x.data, lo, hi), (x,))
    out.backward_fn = lambda g: x._accumulate(g * inside)
    return out


def tsum(x: Tensor) -> Tensor:
    out = Tensor(x.data.sum(), (x,))
    out.backward_fn = lambda g: x._accumulate(np.full(x.data.shape, float(g)))
    return out


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    out = Tensor(x.data.mean(), (x,))
    out.backward_fn = lambda g: x._accumulate(np.full(x.data.shape, float(g) / n))
    return out


def mean_of(tensors: Sequence[Tensor]) -> Tensor:
    return scale(add_n(list(tensors)), 1.0 / len(tensors))


def concat(tensors: Sequence[Tensor]) -> Tensor:
    for t in tensors:
        if t.data.ndim != 1:
            raise ShapeMismatch("concat expects vectors")
    out = Tensor(np.concatenate([t.data for t in tensors]), tuple(tensors))
    sizes = [t.data.shape[0] for t in tensors]

    def bwd(g):
        at = 0
        for t, n in zip(tensors, sizes):
            t._accumulate(g[at:at + n])
            at += n
    out.backward_fn = bwd
    return out


def stack_scalars(tensors: Sequence[Tensor]) -> Tensor:
    for t in tensors:
        if t.data.shape != ():
            raise ShapeMismatch("stack_scalars expects scalars")
    out = Tensor(np.array([t.data for t in tensors]), tuple(tensors))

    def bwd(g):
        for k, t in enumerate(tensors):
            t._accumulate(g[k])
    out.backward_fn = bwd
    return out


def row(m: Tensor, i: int) -> Tensor:
    if m.data.ndim != 2:
        raise ShapeMismatch("row() expects a matrix")
    out = Tensor(m.data[i].copy(), (m,))

    def bwd(g):
        full = np.zeros_like(m.data)
        full[i] = g
        m._accumulate(full)
    out.backward_fn = bwd
    return out


def pick(x: Tensor, i: int) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeMismatch("pick() expects a vector")
    out = Tensor(x.data[i], (x,))

    def bwd(g):
        full = np.zeros_like(x.data)
        full[i] = g
        x._accumulate(full)
    out.backward_fn = bwd
    return out


def softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    s = e / e.sum()
    out = Tensor(s, (x,))
    out.backward_fn = lambda g: x._accumulate(s * (g - np.dot(g, s)))
    return out


def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max()
    lse = np.log(np.exp(shifted).sum())
    ls = shifted - lse
    s = np.exp(ls)
    out = Tensor(ls, (x,))
    out.backward_fn = lambda g: x._accumulate(g - s * g.sum())
    return out


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log softmax probability of the target index."""
    return scale(pick(log_softmax(logits), target), -1.0)


def bce_with_logits(logit: Tensor, target: float) -> Tensor:
    """Binary cross entropy on a scalar logit, numerically stable."""
    if logit.data.shape != ():
        raise ShapeMismatch("bce_with_logits expects a scalar logit")
    l = float(logit.data)
    loss = max(l, 0.0) - l * target + np.log1p(np.exp(-abs(l)))
    out = Tensor(loss, (logit,))
    s = 1.0 / (1.0 + np.exp(-l))
    out.backward_fn = lambda g: logit._accumulate(g * (s - target))
    return out


def sum_squared(x: Tensor) -> Tensor:
    out = Tensor(np.dot(x.data, x.data) if x.data.ndim == 1 else (x.data ** 2).sum(),
                 (x,))
    out.backward_fn = lambda g: x._accumulate(2.0 * float(g) * x.data)
    return out


def reparameterize(mean: Tensor, log_var: Tensor, rng: np.random.Generator) -> Tensor:
    """z = mean + exp(log_var / 2) * eps with eps ~ N(0, I).

    Gradients flow into mean and log_var only; the noise is a constant.
    log_var is clamped to [-20, 20] before exponentiation.
    """
    _same_shape(mean, log_var)
    eps = const(rng.standard_normal(mean.data.shape))
    std = exp(scale(clip(log_var, -20.0, 20.0), 0.5))
    return add(mean, mul(std, eps))


def kl_standard_normal(mean: Tensor, log_var: Tensor) -> Tensor:
    """0.5 * sum(exp(lv) + mean^2 - 1 - lv) against a unit Gaussian prior."""
    _same_shape(mean, log_var)
    lv = clip(log_var, -20.0, 20.0)
    term = sub(add(exp(lv), mul(mean, mean)),
               add(lv, const(np.ones(mean.data.shape))))
    return scale(tsum(term), 0.5)
