"""Minimal reverse-mode differentiation over numpy arrays.

Operations append nodes to a :class:`Tape` in execution order, which is a
topological order of the graph; :meth:`Tape.gradient` walks it backwards
once. Only the primitives the training losses need are provided.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

__all__ = [
    "Tape",
    "Var",
    "affine",
    "relu",
    "total",
    "mean",
    "sum_squares",
    "sqrt",
    "inner",
    "take",
    "pairwise_riesz",
    "cross_riesz",
    "norm_power_sum",
]


class Var:
    __slots__ = ("tape", "value", "index", "parents", "backward")

    def __init__(self, tape, value, parents=(), backward=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.backward = backward
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Var(shape={self.shape}, index={self.index})"

    def __add__(self, other):
        return _binary(self, other, np.add, lambda g, a, b: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract, lambda g, a, b: (g, -g))

    def __rsub__(self, other):
        return _binary(other, self, np.subtract, lambda g, a, b: (g, -g), tape=self.tape)

    def __mul__(self, other):
        return _binary(self, other, np.multiply, lambda g, a, b: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, np.divide, lambda g, a, b: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other):
        return _binary(other, self, np.divide, lambda g, a, b: (g / b, -g * a / (b * b)), tape=self.tape)

    def __neg__(self):
        return self * -1.0


class Tape:
    """Records one loss evaluation."""

    def __init__(self):
        self.nodes: list[Var] = []

    def variable(self, value) -> Var:
        return Var(self, np.asarray(value, dtype=np.float64))

    constant = variable

    def gradient(self, root: Var, wrt) -> list[np.ndarray]:
        """Gradients of the scalar ``root`` with respect to each Var in ``wrt``."""
        if root.tape is not self:
            raise ValueError("root was recorded on a different tape")
        if np.size(root.value) != 1:
            raise ValueError(f"gradient needs a scalar root, got shape {root.shape}")
        grads = {root.index: np.ones_like(root.value)}
        for node in reversed(self.nodes[: root.index + 1]):
            if node.backward is None:
                continue
            g = grads.pop(node.index, None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if parent is None or pg is None:
                    continue
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + pg
                else:
                    grads[parent.index] = pg
        return [
            np.broadcast_to(grads[v.index], v.shape).copy() if v.index in grads else np.zeros(v.shape)
            for v in wrt
        ]


def _unbroadcast(g, shape):
    while np.ndim(g) > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and np.shape(g)[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(a, b, op, back, tape=None):
    tape = tape or (a.tape if isinstance(a, Var) else b.tape)
    av = a.value if isinstance(a, Var) else np.asarray(a, dtype=np.float64)
    bv = b.value if isinstance(b, Var) else np.asarray(b, dtype=np.float64)

    def backward(g):
        ga, gb = back(g, av, bv)
        return (
            _unbroadcast(ga, np.shape(av)) if isinstance(a, Var) else None,
            _unbroadcast(gb, np.shape(bv)) if isinstance(b, Var) else None,
        )

    parents = (a if isinstance(a, Var) else None, b if isinstance(b, Var) else None)
    return Var(tape, op(av, bv), parents, backward)


def affine(x: Var, W: Var, b: Var) -> Var:
    """Row-wise ``x @ W + b``."""
    out = x.value @ W.value + b.value

    def backward(g):
        return g @ W.value.T, x.value.T @ g, g.sum(axis=0)

    return Var(x.tape, out, (x, W, b), backward)


def relu(x: Var) -> Var:
    mask = x.value > 0.0
    return Var(x.tape, np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def total(x: Var) -> Var:
    shape = x.shape
    return Var(x.tape, np.sum(x.value), (x,), lambda g: (np.broadcast_to(g, shape),))


def mean(x: Var) -> Var:
    size = np.size(x.value)
    return total(x) * (1.0 / size)


def sum_squares(x: Var) -> Var:
    v = x.value
    return Var(x.tape, np.sum(v * v), (x,), lambda g: (2.0 * g * v,))


def sqrt(x: Var) -> Var:
    out = np.sqrt(x.value)
    return Var(x.tape, out, (x,), lambda g: (g * 0.5 / out,))


def inner(x: Var, c) -> Var:
    """``sum(x * c)`` for a constant array ``c``."""
    c = np.asarray(c, dtype=np.float64)
    return Var(x.tape, np.sum(x.value * c), (x,), lambda g: (g * c,))


def take(x: Var, rows=None, cols=None) -> Var:
    """Sub-matrix ``x[rows][:, cols]``; the backward pass scatters into zeros."""
    rows = np.arange(x.shape[0]) if rows is None else np.asarray(rows)
    if rows.dtype == bool:
        rows = np.flatnonzero(rows)
    cols = np.arange(x.shape[1]) if cols is None else np.asarray(cols)
    out = x.value[np.ix_(rows, cols)]
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, np.ix_(rows, cols), g)
        return (full,)

    return Var(x.tape, out, (x,), backward)


def _contiguous(v):
    return np.ascontiguousarray(v, dtype=np.float64)


def pairwise_riesz(x: Var, r: float, norm1: bool = False) -> Var:
    """``sum_{i,j} ||x_i - x_j||^r`` over ordered pairs (coincident rows: subgradient 0)."""
    if x.shape[0] == 0:
        return x.tape.constant(0.0)
    val, grad, _ = _kernels.self_sum(_contiguous(x.value), float(r), bool(norm1), True)
    return Var(x.tape, np.float64(val), (x,), lambda g: (g * grad,))


def cross_riesz(x: Var, y, r: float, norm1: bool = False) -> Var:
    """``sum_{i,j} ||x_i - y_j||^r`` for a constant point set ``y``."""
    if x.shape[0] == 0:
        return x.tape.constant(0.0)
    val, grad, _ = _kernels.cross_sum(_contiguous(x.value), _contiguous(y), float(r), bool(norm1), True)
    return Var(x.tape, np.float64(val), (x,), lambda g: (g * grad,))


def norm_power_sum(x: Var, r: float, norm1: bool = False, weights=None) -> Var:
    """``sum_i w_i ||x_i||^r``; rows at the origin get subgradient 0."""
    v = x.value
    w = np.ones(v.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    rho = np.abs(v).sum(axis=1) if norm1 else np.sqrt((v * v).sum(axis=1))
    nz = rho > 0.0
    safe = np.where(nz, rho, 1.0)
    out = np.sum(w * np.where(nz, safe**r, 0.0))
    if norm1:
        dir_ = np.sign(v) * np.where(nz, r * safe ** (r - 1.0), 0.0)[:, None]
    else:
        dir_ = v * np.where(nz, r * safe ** (r - 2.0), 0.0)[:, None]
    grad = w[:, None] * dir_
    return Var(x.tape, np.float64(out), (x,), lambda g: (g * grad,))
