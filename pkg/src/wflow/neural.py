"""Conditional generator ``T(x, z)``, its parameters and the Adam optimizer.

The network is a rectifier MLP acting row-wise on ``[x | z]``. Layers
compute ``h @ W + b`` so a weight matrix has shape ``(fan_in, fan_out)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .measures import RandomSource, as_points

__all__ = [
    "MlpParams",
    "AdamState",
    "init_mlp",
    "mlp_forward",
    "mlp_forward_taped",
    "loss_gradient",
    "adam_step",
    "save_params",
    "load_params",
]


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Layer list ``[(W_1, b_1), ..., (W_L, b_L)]``; input width ``2d``, output width ``d``."""

    layers: tuple

    def __post_init__(self):
        layers = tuple((np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64)) for W, b in self.layers)
        if not layers:
            raise ValueError("an MLP needs at least one layer")
        for k, (W, b) in enumerate(layers):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {k}: weight {W.shape} and bias {b.shape} do not fit")
            if k and W.shape[0] != layers[k - 1][0].shape[1]:
                raise ValueError(f"layer {k} expects width {W.shape[0]}, previous layer gives {layers[k - 1][0].shape[1]}")
        if layers[0][0].shape[0] != 2 * layers[-1][0].shape[1]:
            raise ValueError("input width must be twice the output width (x and z side by side)")
        object.__setattr__(self, "layers", layers)

    @property
    def dim(self) -> int:
        return self.layers[-1][0].shape[1]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [W.shape for W, _ in self.layers]

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer]

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(tuple(zip(arrays[0::2], arrays[1::2])))


def init_mlp(rng: RandomSource, d: int, hidden) -> MlpParams:
    """He-normal weights (variance ``2 / fan_in``) and zero biases."""
    hidden = list(hidden)
    if not hidden:
        raise ValueError("hidden widths must be non-empty")
    widths = [2 * d] + hidden + [d]
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        W = rng.normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        layers.append((W, np.zeros(fan_out)))
    return MlpParams(tuple(layers))


def _inputs(p: MlpParams, x, z) -> np.ndarray:
    x, z = as_points(x), as_points(z)
    if x.shape != z.shape:
        raise ValueError(f"x {x.shape} and z {z.shape} must have equal shapes")
    if x.shape[1] != p.dim:
        raise ValueError(f"network maps dimension {p.dim}, got inputs of dimension {x.shape[1]}")
    return np.concatenate([x, z], axis=1)


def mlp_forward(p: MlpParams, x, z) -> np.ndarray:
    h = _inputs(p, x, z)
    last = len(p.layers) - 1
    for k, (W, b) in enumerate(p.layers):
        h = h @ W + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h


def mlp_forward_taped(tape: ad.Tape, weights: list[ad.Var], p: MlpParams, x, z) -> ad.Var:
    """Record the forward pass on ``tape``; ``weights`` are the taped counterparts of ``p.arrays()``."""
    h = tape.constant(_inputs(p, x, z))
    last = len(p.layers) - 1
    for k in range(len(p.layers)):
        h = ad.affine(h, weights[2 * k], weights[2 * k + 1])
        if k < last:
            h = ad.relu(h)
    return h


def loss_gradient(loss_fn, p: MlpParams) -> tuple[float, list[np.ndarray]]:
    """Evaluate ``loss_fn(tape, weights)`` on a fresh tape and differentiate it.

    Returns the loss value and one gradient array per entry of ``p.arrays()``.
    """
    tape = ad.Tape()
    weights = [tape.variable(a) for a in p.arrays()]
    loss = loss_fn(tape, weights)
    return float(loss.value), tape.gradient(loss, weights)


@dataclass
class AdamState:
    lr: float
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, p: MlpParams, lr: float) -> "AdamState":
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        arrays = p.arrays()
        return cls(lr, [np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(p: MlpParams, grads, s: AdamState) -> MlpParams:
    """One bias-corrected Adam update; ``s`` is advanced in place."""
    arrays = p.arrays()
    if len(grads) != len(arrays) or any(g.shape != a.shape for g, a in zip(grads, arrays)):
        raise ValueError("gradient shapes do not match the parameters")
    s.step += 1
    c1 = 1.0 - s.beta1**s.step
    c2 = 1.0 - s.beta2**s.step
    out = []
    for k, (a, g) in enumerate(zip(arrays, grads)):
        s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * g
        s.v[k] = s.beta2 * s.v[k] + (1.0 - s.beta2) * g * g
        out.append(a - s.lr * (s.m[k] / c1) / (np.sqrt(s.v[k] / c2) + s.eps))
    return MlpParams.from_arrays(out)


def save_params(path, p: MlpParams) -> None:
    """Checkpoint: one JSON line ``{"shapes": [[fan_in, fan_out], ...]}`` then raw float64 (little endian).

    The payload holds, per layer, the row-major weight matrix followed by the bias.
    """
    header = json.dumps({"format": "wflow-mlp", "dtype": "<f8", "shapes": [list(s) for s in p.shapes]})
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in p.arrays())
    Path(path).write_bytes(header.encode() + b"\n" + payload)


def load_params(path) -> MlpParams:
    raw = Path(path).read_bytes()
    head, sep, payload = raw.partition(b"\n")
    if not sep:
        raise ValueError(f"{path}: missing checkpoint header")
    meta = json.loads(head)
    if meta.get("format") != "wflow-mlp":
        raise ValueError(f"{path}: not an MLP checkpoint")
    data = np.frombuffer(payload, dtype="<f8")
    arrays, offset = [], 0
    for fan_in, fan_out in meta["shapes"]:
        for shape in ((fan_in, fan_out), (fan_out,)):
            size = int(np.prod(shape))
            if offset + size > data.size:
                raise ValueError(f"{path}: truncated payload")
            arrays.append(data[offset : offset + size].reshape(shape).astype(np.float64))
            offset += size
    if offset != data.size:
        raise ValueError(f"{path}: {data.size - offset} trailing values")
    return MlpParams.from_arrays(arrays)
