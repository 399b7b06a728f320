"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for the models in this package: elementwise
arithmetic, affine maps, sigmoid/tanh, concatenation, reshape, and mean
reduction.  Graphs are built eagerly; Tensor.backward() runs one reverse
topological pass and accumulates into .grad on every requires_grad node it
reaches.  Custom nodes (the quantum circuit step) plug in via
Tensor.from_op with a hand-written backward closure.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @classmethod
    def from_op(cls, data, parents, backward_fn) -> "Tensor":
        """Graph node: backward_fn(grad_out) returns one grad per parent."""
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        return out

    @property
    def shape(self):
        return self.data.shape

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit grad needs a scalar")
            grad = np.ones_like(self.data)
        order = _toposort(self)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in order:
            if node.grad is None or node._backward_fn is None:
                continue
            for parent, pg in zip(node._parents, node._backward_fn(node.grad)):
                if pg is None or not parent.requires_grad:
                    continue
                parent.grad = pg if parent.grad is None else parent.grad + pg

    def __add__(self, other):
        return add(self, _ensure(other))

    def __sub__(self, other):
        return sub(self, _ensure(other))

    def __mul__(self, other):
        return mul(self, _ensure(other))

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse topological order (root first) over requires_grad nodes."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    for _ in range(g.ndim - len(shape)):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor.from_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Tensor.from_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor.from_op(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    return Tensor.from_op(a.data**2, (a,), lambda g: (2.0 * a.data * g,))


def scale(a: Tensor, factor) -> Tensor:
    """Multiply by a constant scalar or array (dropout masks, rescaling)."""
    factor = np.asarray(factor, dtype=float)
    return Tensor.from_op(a.data * factor, (a,), lambda g: (g * factor,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor.from_op(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w.T + b for weight matrices stored [out_dim, in_dim]."""
    return Tensor.from_op(
        x.data @ w.data.T + b.data,
        (x, w, b),
        lambda g: (g @ w.data, g.T @ x.data, g.sum(axis=0)),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so neither branch exponentiates a large positive value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return Tensor.from_op(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return Tensor.from_op(t, (a,), lambda g: (g * (1.0 - t * t),))


def mean(a: Tensor) -> Tensor:
    inv = 1.0 / a.data.size
    return Tensor.from_op(
        np.asarray(a.data.mean()),
        (a,),
        lambda g: (np.broadcast_to(np.asarray(g) * inv, a.data.shape).copy(),),
    )


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(data, tuple(tensors), backward)


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor.from_op(
        a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),)
    )
