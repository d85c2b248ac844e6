"""Riesz kernels and the discrete energies the flows descend.

All energies act on uniformly weighted clouds ``(1/N) sum_i delta_{x_i}``.
Pairwise Riesz terms between coincident points are not differentiable;
gradients use the subgradient 0 there, while :func:`directional_derivative`
returns the exact one-sided value (possibly infinite).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from . import autodiff as ad
from .measures import as_points

__all__ = [
    "RieszKernel",
    "Functional",
    "ZeroFunctional",
    "InteractionEnergy",
    "MmdToTarget",
    "BranchingEnergy",
    "Barycenter",
    "Linearization",
    "PairTerm",
    "AnchorTerm",
    "NonDifferentiableWarning",
    "kernel_eval",
    "interaction_energy",
    "potential_energy",
    "mmd_squared",
    "mmd_squared_1d_fast",
    "functional_value",
    "particle_gradient",
    "directional_derivative",
]


class NonDifferentiableWarning(RuntimeWarning):
    """Coincident points met a Riesz term with r < 1; the gradient used subgradient 0."""


@dataclass(frozen=True)
class RieszKernel:
    """``K(x, y) = -||x - y||^r`` with ``0 < r < 2``; ``norm`` selects the 2- or 1-norm."""

    r: float = 1.0
    norm: int = 2

    def __post_init__(self):
        if not 0.0 < self.r < 2.0:
            raise ValueError(f"Riesz exponent must lie in (0, 2), got {self.r}")
        if self.norm not in (1, 2):
            raise ValueError(f"norm must be 1 or 2, got {self.norm}")
        object.__setattr__(self, "r", float(self.r))

    @property
    def norm1(self) -> bool:
        return self.norm == 1

    def __call__(self, x, y) -> float:
        return kernel_eval(self, x, y)


def kernel_eval(k: RieszKernel, x, y) -> float:
    diff = np.atleast_1d(np.asarray(x, dtype=np.float64)) - np.atleast_1d(np.asarray(y, dtype=np.float64))
    rho = np.abs(diff).sum() if k.norm1 else math.sqrt(float(diff @ diff))
    return -(rho**k.r) if rho > 0 else 0.0


def _pts(c):
    return np.ascontiguousarray(as_points(c), dtype=np.float64)


def _check_dims(a, b):
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")


def _self(X, k, grad=False):
    return _kernels.self_sum(X, k.r, k.norm1, grad)


def _cross(X, Y, k, grad=False):
    return _kernels.cross_sum(X, Y, k.r, k.norm1, grad)


def interaction_energy(k: RieszKernel, c) -> float:
    """``(1/2N^2) sum_{i,j} K(x_i, x_j)``."""
    X = _pts(c)
    return 0.0 - _self(X, k)[0] / (2.0 * X.shape[0] ** 2)


def potential_energy(k: RieszKernel, c, target) -> float:
    """``-(1/NM) sum_{i,j} K(x_i, y_j)``: attraction toward the target cloud."""
    X, Y = _pts(c), _pts(target)
    _check_dims(X, Y)
    return _cross(X, Y, k)[0] / (X.shape[0] * Y.shape[0])


def mmd_squared(k: RieszKernel, a, b) -> float:
    """Squared kernel discrepancy ``E(a) + E(b) - int int K da db``."""
    A, B = _pts(a), _pts(b)
    _check_dims(A, B)
    return interaction_energy(k, A) + interaction_energy(k, B) + potential_energy(k, A, B)


def _sorted_pair_sum(x):
    # sum_{i<j} |x_i - x_j| for sorted x
    n = x.size
    return float(np.dot(x, 2.0 * np.arange(n) - (n - 1)))


def mmd_squared_1d_fast(k: RieszKernel, a, b) -> float:
    """O(N log N) squared discrepancy for 1D clouds and the distance kernel (r = 1)."""
    if k.r != 1.0:
        raise ValueError("the sorted evaluation needs r = 1")
    A, B = _pts(a), _pts(b)
    if A.shape[1] != 1 or B.shape[1] != 1:
        raise ValueError("the sorted evaluation needs 1D clouds")
    xa, xb = np.sort(A[:, 0]), np.sort(B[:, 0])
    n, m = xa.size, xb.size
    sa, sb = _sorted_pair_sum(xa), _sorted_pair_sum(xb)
    cross = _sorted_pair_sum(np.sort(np.concatenate([xa, xb]))) - sa - sb
    return -sa / n**2 - sb / m**2 + cross / (n * m)


def _row_keys(X):
    # +0.0 folds -0.0 onto 0.0 so byte keys agree with ==
    return [row.tobytes() for row in np.ascontiguousarray(X + 0.0)]


def _coincident_groups(X):
    """Index arrays of rows that share identical coordinates (groups of size >= 2)."""
    if X.shape[0] < 2:
        return []
    _, inverse, counts = np.unique(X + 0.0, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    return [np.flatnonzero(inverse == g) for g in np.flatnonzero(counts >= 2)]


def _anchor_counts(X, Y):
    """For each row of X, how many rows of Y coincide with it."""
    table = {}
    for key in _row_keys(Y):
        table[key] = table.get(key, 0) + 1
    return np.array([table.get(key, 0) for key in _row_keys(X)], dtype=np.float64)


@dataclass
class PairTerm:
    """``coef * sum_{i,j in rows} rho(v_i - v_j)^r`` restricted to columns ``cols``."""

    rows: np.ndarray
    coef: float
    r: float
    norm1: bool
    cols: np.ndarray | None = None


@dataclass
class AnchorTerm:
    """``sum_{i in rows} weights_i * rho(v_i)^r`` restricted to columns ``cols``."""

    rows: np.ndarray
    weights: np.ndarray
    r: float
    norm1: bool
    cols: np.ndarray | None = None


def _singular_value(rho_r_sum, any_nonzero, r, sign):
    if not any_nonzero or r > 1.0:
        return 0.0
    if r == 1.0:
        return rho_r_sum
    return sign * math.inf


@dataclass
class Linearization:
    """Directional derivative of a functional at a fixed cloud as a function of the direction.

    ``D(v) = <grad, v> + sum(pair terms) + sum(anchor terms)``. Singular terms
    follow the one-sided rule for ``t^r``: vanish for r > 1, are norms for
    r = 1 and infinite for r < 1.
    """

    grad: np.ndarray
    pairs: list[PairTerm] = field(default_factory=list)
    anchors: list[AnchorTerm] = field(default_factory=list)

    def _active(self):
        return [p for p in self.pairs if p.r <= 1.0], [a for a in self.anchors if a.r <= 1.0]

    @property
    def unbounded(self) -> bool:
        """True when some direction makes the derivative infinite (a singular term with r < 1)."""
        pairs, anchors = self._active()
        return any(p.r < 1.0 for p in pairs) or any(a.r < 1.0 for a in anchors)

    @property
    def vanishes(self) -> bool:
        """True when the derivative is zero in every direction."""
        pairs, anchors = self._active()
        return not pairs and not anchors and not np.any(self.grad)

    def evaluate(self, V) -> float:
        V = np.asarray(V, dtype=np.float64)
        out = float(np.sum(self.grad * V))
        neg = pos = False
        for p in self.pairs:
            sub = V[p.rows] if p.cols is None else V[np.ix_(p.rows, p.cols)]
            s, _, n_coinc = _kernels.self_sum(np.ascontiguousarray(sub), 1.0, p.norm1, False)
            nonzero = n_coinc < sub.shape[0] * (sub.shape[0] - 1) // 2
            if p.r < 1.0 and nonzero:
                neg |= p.coef < 0
                pos |= p.coef > 0
            else:
                out += p.coef * _singular_value(s, nonzero, p.r, 1.0)
        for a in self.anchors:
            sub = V[a.rows] if a.cols is None else V[np.ix_(a.rows, a.cols)]
            rho = np.abs(sub).sum(axis=1) if a.norm1 else np.sqrt((sub * sub).sum(axis=1))
            nonzero = np.any((rho > 0) & (a.weights != 0))
            if a.r < 1.0 and nonzero:
                pos = True
            else:
                out += _singular_value(float(np.dot(a.weights, rho)), nonzero, a.r, 1.0)
        if neg:
            return -math.inf
        if pos:
            return math.inf
        return out

    def taped(self, T: ad.Var, rows=None) -> ad.Var:
        """The derivative in direction ``T`` recorded on T's tape.

        ``rows`` selects the particles T refers to (mini-batch); linear and
        anchor terms are rescaled by ``N/B`` and pair terms by ``(N/B)^2``.
        Terms with r > 1 vanish; callers must reject r < 1 beforehand.
        """
        n = self.grad.shape[0]
        rows = np.arange(n) if rows is None else np.asarray(rows)
        scale = n / rows.size
        pos = np.full(n, -1)
        pos[rows] = np.arange(rows.size)
        out = ad.inner(T, self.grad[rows] * scale)
        for p in self.pairs:
            if p.r > 1.0:
                continue
            local = pos[p.rows]
            local = local[local >= 0]
            if local.size < 2:
                continue
            sub = ad.take(T, local, p.cols)
            out = out + ad.pairwise_riesz(sub, 1.0, p.norm1) * (p.coef * scale**2)
        for a in self.anchors:
            if a.r > 1.0:
                continue
            local = pos[a.rows]
            keep = local >= 0
            if not np.any(keep):
                continue
            sub = ad.take(T, local[keep], a.cols)
            out = out + ad.norm_power_sum(sub, 1.0, a.norm1, a.weights[keep] * scale)
        return out


class Functional:
    """Base class of the discrete energies ``F((1/N) sum_i delta_{x_i})``."""

    dim: int | None = None

    def check(self, X):
        if self.dim is not None and X.shape[1] != self.dim:
            raise ValueError(f"{type(self).__name__} expects dimension {self.dim}, got {X.shape[1]}")

    def value(self, X) -> float:
        raise NotImplementedError

    def gradient(self, X) -> np.ndarray:
        raise NotImplementedError

    def directional_derivative(self, X, V) -> float:
        raise NotImplementedError

    def linearization(self, X) -> Linearization:
        raise NotImplementedError

    def taped_value(self, T: ad.Var) -> ad.Var:
        raise NotImplementedError


def _combine(finite, neg_inf, pos_inf):
    if neg_inf:
        return -math.inf
    if pos_inf:
        return math.inf
    return finite


def _warn_if_singular(k, n_coincident):
    if n_coincident and k.r < 1.0:
        warnings.warn(
            f"{n_coincident} coincident pair(s) with r={k.r} < 1: gradient uses subgradient 0",
            NonDifferentiableWarning,
            stacklevel=4,
        )


@dataclass(frozen=True)
class ZeroFunctional(Functional):
    """``F = 0``; the backward step then reduces to the identity transport."""

    def value(self, X):
        return 0.0

    def gradient(self, X):
        return np.zeros_like(as_points(X))

    def directional_derivative(self, X, V):
        return 0.0

    def linearization(self, X):
        return Linearization(np.zeros_like(as_points(X)))

    def taped_value(self, T):
        return T.tape.constant(0.0)


class _InteractionMixin:
    kernel: RieszKernel

    def _e_value(self, X):
        return 0.0 - _self(X, self.kernel)[0] / (2.0 * X.shape[0] ** 2)

    def _e_grad(self, X):
        _, g, n_coinc = _self(X, self.kernel, True)
        _warn_if_singular(self.kernel, n_coinc)
        return -g / (2.0 * X.shape[0] ** 2)

    def _e_dd(self, X, V):
        k = self.kernel
        finite, n_inf = _kernels.self_dirderiv(X, V, k.r, k.norm1)
        return -finite / (2.0 * X.shape[0] ** 2), n_inf > 0

    def _e_lin(self, X):
        k, n = self.kernel, X.shape[0]
        pairs = [PairTerm(rows, -1.0 / (2.0 * n * n), k.r, k.norm1) for rows in _coincident_groups(X)]
        return self._e_grad_quiet(X), pairs

    def _e_grad_quiet(self, X):
        _, g, _ = _self(X, self.kernel, True)
        return -g / (2.0 * X.shape[0] ** 2)

    def _e_taped(self, T):
        b = T.shape[0]
        return ad.pairwise_riesz(T, self.kernel.r, self.kernel.norm1) * (-1.0 / (2.0 * b * b))


@dataclass(frozen=True, eq=False)
class InteractionEnergy(_InteractionMixin, Functional):
    """``E_K(mu) = 1/2 int int K dmu dmu``."""

    kernel: RieszKernel = field(default_factory=RieszKernel)

    def value(self, X):
        X = _pts(X)
        return self._e_value(X)

    def gradient(self, X):
        X = _pts(X)
        return self._e_grad(X)

    def directional_derivative(self, X, V):
        X, V = _pts(X), _pts(V)
        finite, neg = self._e_dd(X, V)
        return _combine(finite, neg, False)

    def linearization(self, X):
        g, pairs = self._e_lin(_pts(X))
        return Linearization(g, pairs)

    def taped_value(self, T):
        return self._e_taped(T)


class _TargetsMixin(_InteractionMixin):
    """Interaction energy plus a weighted sum of potential energies toward fixed clouds."""

    def _targets(self):
        raise NotImplementedError

    def value(self, X):
        X = _pts(X)
        self.check(X)
        out = self._e_value(X)
        for w, Y in self._targets():
            out += w * _cross(X, Y, self.kernel)[0] / (X.shape[0] * Y.shape[0])
        return out

    def gradient(self, X):
        X = _pts(X)
        self.check(X)
        g = self._e_grad(X)
        for w, Y in self._targets():
            _, gy, n_coinc = _cross(X, Y, self.kernel, True)
            _warn_if_singular(self.kernel, n_coinc)
            g = g + gy * (w / (X.shape[0] * Y.shape[0]))
        return g

    def directional_derivative(self, X, V):
        X, V = _pts(X), _pts(V)
        self.check(X)
        k = self.kernel
        finite, neg = self._e_dd(X, V)
        pos = False
        for w, Y in self._targets():
            f, n_inf = _kernels.cross_dirderiv(X, V, Y, k.r, k.norm1)
            finite += w * f / (X.shape[0] * Y.shape[0])
            pos |= n_inf > 0 and w > 0
        return _combine(finite, neg, pos)

    def linearization(self, X):
        X = _pts(X)
        self.check(X)
        k = self.kernel
        g, pairs = self._e_lin(X)
        anchors = []
        for w, Y in self._targets():
            _, gy, _ = _cross(X, Y, k, True)
            g = g + gy * (w / (X.shape[0] * Y.shape[0]))
            counts = _anchor_counts(X, Y)
            rows = np.flatnonzero(counts)
            if rows.size:
                anchors.append(AnchorTerm(rows, counts[rows] * w / (X.shape[0] * Y.shape[0]), k.r, k.norm1))
        return Linearization(g, pairs, anchors)

    def taped_value(self, T):
        out = self._e_taped(T)
        b = T.shape[0]
        for w, Y in self._targets():
            out = out + ad.cross_riesz(T, Y, self.kernel.r, self.kernel.norm1) * (w / (b * Y.shape[0]))
        return out


@dataclass(frozen=True, eq=False)
class MmdToTarget(_TargetsMixin, Functional):
    """``F_nu = E_K + V_{K,nu}``, equal to the squared discrepancy to nu up to a constant."""

    kernel: RieszKernel = field(default_factory=RieszKernel)
    target: np.ndarray = None

    def __post_init__(self):
        Y = _pts(self.target) if self.target is not None else None
        if Y is None or Y.shape[0] == 0:
            raise ValueError("MmdToTarget needs a non-empty target cloud")
        Y.setflags(write=False)
        object.__setattr__(self, "target", Y)

    @property
    def dim(self):
        return self.target.shape[1]

    def _targets(self):
        return [(1.0, self.target)]


@dataclass(frozen=True, eq=False)
class Barycenter(_TargetsMixin, Functional):
    """``sum_k alpha_k D_K^2(mu, mu_k)`` with weights summing to one."""

    kernel: RieszKernel = field(default_factory=RieszKernel)
    components: tuple = ()

    def __post_init__(self):
        comps = tuple((float(w), _pts(Y)) for w, Y in self.components)
        if not comps:
            raise ValueError("Barycenter needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"barycenter weights must be >= 0 and sum to 1, got {weights.tolist()}")
        if len({Y.shape[1] for _, Y in comps}) != 1:
            raise ValueError("barycenter components must share one dimension")
        for _, Y in comps:
            Y.setflags(write=False)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return self.components[0][1].shape[1]

    def _targets(self):
        return self.components

    @cached_property
    def _constant(self):
        return sum(w * interaction_energy(self.kernel, Y) for w, Y in self.components)

    def value(self, X):
        return super().value(X) + self._constant

    def taped_value(self, T):
        return super().taped_value(T) + self._constant


def _right_abs(y, v):
    # right derivative of |y + t v| at t = 0
    return np.where(y != 0, np.sign(y) * v, np.abs(v))


@dataclass(frozen=True)
class BranchingEnergy(Functional):
    """Planar energy whose flow collapses onto the x-axis and then branches.

    ``F(mu) = int 1{x<0}|y| - x dmu - 1/2 int int 1{x1>=0, x2>=0} |y1 - y2| dmu dmu``.
    """

    dim: int = 2

    def _parts(self, X, left, active):
        n = X.shape[0]
        y = X[:, 1]
        first = (np.sum(np.abs(y[left])) - np.sum(X[:, 0])) / n
        ya = np.ascontiguousarray(y[active][:, None])
        second = _kernels.self_sum(ya, 1.0, True, False)[0] / (2.0 * n * n) if ya.shape[0] > 1 else 0.0
        return first - second

    def value(self, X):
        X = _pts(X)
        self.check(X)
        left = X[:, 0] < 0
        return self._parts(X, left, ~left)

    def gradient(self, X):
        X = _pts(X)
        self.check(X)
        n = X.shape[0]
        left = X[:, 0] < 0
        g = np.zeros_like(X)
        g[:, 0] = -1.0 / n
        g[:, 1] = np.where(left, np.sign(X[:, 1]), 0.0) / n
        idx = np.flatnonzero(~left)
        if idx.size > 1:
            _, gy, _ = _kernels.self_sum(np.ascontiguousarray(X[idx, 1:2]), 1.0, True, True)
            g[idx, 1] -= gy[:, 0] / (2.0 * n * n)
        return g

    def directional_derivative(self, X, V):
        X, V = _pts(X), _pts(V)
        self.check(X)
        n = X.shape[0]
        x, y, vx, vy = X[:, 0], X[:, 1], V[:, 0], V[:, 1]
        # indicator sets just after t = 0
        left_plus = (x < 0) | ((x == 0) & (vx < 0))
        jump = self._parts(X, left_plus, ~left_plus) - self.value(X)
        if jump != 0.0:
            return math.copysign(math.inf, jump)
        first = (np.sum(_right_abs(y[left_plus], vy[left_plus])) - np.sum(vx)) / n
        act = np.flatnonzero(~left_plus)
        second = 0.0
        if act.size > 1:
            f, _ = _kernels.self_dirderiv(
                np.ascontiguousarray(X[act, 1:2]), np.ascontiguousarray(V[act, 1:2]), 1.0, True
            )
            second = f / (2.0 * n * n)
        return first - second

    def linearization(self, X):
        X = _pts(X)
        n = X.shape[0]
        left = X[:, 0] < 0
        g = self.gradient(X)
        act = np.flatnonzero(~left)
        pairs = [
            PairTerm(act[rows], -1.0 / (2.0 * n * n), 1.0, True, np.array([1]))
            for rows in _coincident_groups(X[act, 1:2])
        ]
        on_axis = np.flatnonzero(left & (X[:, 1] == 0))
        anchors = []
        if on_axis.size:
            anchors.append(AnchorTerm(on_axis, np.full(on_axis.size, 1.0 / n), 1.0, True, np.array([1])))
        return Linearization(g, pairs, anchors)

    def taped_value(self, T):
        b = T.shape[0]
        left = T.value[:, 0] < 0
        out = ad.total(ad.take(T, None, [0])) * (-1.0 / b)
        if np.any(left):
            out = out + ad.norm_power_sum(ad.take(T, left, [1]), 1.0, True) * (1.0 / b)
        if np.count_nonzero(~left) > 1:
            out = out + ad.pairwise_riesz(ad.take(T, ~left, [1]), 1.0, True) * (-1.0 / (2.0 * b * b))
        return out


def functional_value(f: Functional, c) -> float:
    return f.value(_pts(c))


def particle_gradient(f: Functional, c) -> np.ndarray:
    """Euclidean gradient of ``F_M(x_1..x_M) = F((1/M) sum delta_{x_i})`` (no factor M).

    Coincident Riesz pairs contribute 0; with r < 1 this emits
    :class:`NonDifferentiableWarning`.
    """
    return f.gradient(_pts(c)) + 0.0


def directional_derivative(f: Functional, c, direction) -> float:
    """Exact right derivative of ``t -> F(x + t v)`` at 0; may be +-inf."""
    X, V = _pts(c), _pts(direction)
    if X.shape != V.shape:
        raise ValueError(f"direction shape {V.shape} does not match cloud shape {X.shape}")
    return f.directional_derivative(X, V) + 0.0
