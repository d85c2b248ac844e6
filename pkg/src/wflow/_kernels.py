"""Compiled pairwise Riesz sums.

Every loop runs in a fixed i-major order, so results are bit-reproducible.
Coincident pairs contribute nothing to values or gradients (subgradient 0);
callers that care receive the number of such pairs.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _rho(a, b, norm1):
    acc = 0.0
    if norm1:
        for k in range(a.shape[0]):
            acc += abs(a[k] - b[k])
        return acc
    for k in range(a.shape[0]):
        diff = a[k] - b[k]
        acc += diff * diff
    return math.sqrt(acc)


@njit(cache=True)
def _sign(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def _compile_sums(norm1, unit):
    # one compiled variant per norm and for r == 1 keeps the inner loops branch-free

    @njit(cache=True)
    def power_and_coef(acc, r):
        # acc is the 1-norm or the squared 2-norm; returns rho^r and the factor
        # turning a coordinate difference (or its sign) into the gradient
        if norm1:
            if unit:
                return acc, 1.0
            p = acc**r
            return p, r * p / acc
        rho = math.sqrt(acc)
        if unit:
            return rho, 1.0 / rho
        p = rho**r
        return p, r * p / acc

    @njit(cache=True)
    def self_sum(X, r, want_grad):
        n, d = X.shape
        total = 0.0
        grad = np.zeros((n, d) if want_grad else (0, d))
        coincident = 0
        xi = np.empty(d)
        gi = np.empty(d)
        diff = np.empty(d)
        for i in range(n):
            for k in range(d):
                xi[k] = X[i, k]
                gi[k] = 0.0
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(d):
                    a = xi[k] - X[j, k]
                    diff[k] = a
                    acc += abs(a) if norm1 else a * a
                if acc == 0.0:
                    coincident += 1
                    continue
                p, c = power_and_coef(acc, r)
                total += p
                if want_grad:
                    for k in range(d):
                        g = c * (_sign(diff[k]) if norm1 else diff[k])
                        gi[k] += g
                        grad[j, k] -= g
            if want_grad:
                for k in range(d):
                    grad[i, k] += gi[k]
        return 2.0 * total, 2.0 * grad, coincident

    @njit(cache=True)
    def cross_sum(X, Y, r, want_grad):
        n, d = X.shape
        m = Y.shape[0]
        total = 0.0
        grad = np.zeros((n, d) if want_grad else (0, d))
        coincident = 0
        xi = np.empty(d)
        diff = np.empty(d)
        for i in range(n):
            for k in range(d):
                xi[k] = X[i, k]
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    a = xi[k] - Y[j, k]
                    diff[k] = a
                    acc += abs(a) if norm1 else a * a
                if acc == 0.0:
                    coincident += 1
                    continue
                p, c = power_and_coef(acc, r)
                total += p
                if want_grad:
                    for k in range(d):
                        grad[i, k] += c * (_sign(diff[k]) if norm1 else diff[k])
        return total, grad, coincident

    return self_sum, cross_sum


_SUMS = {(norm1, unit): _compile_sums(norm1, unit) for norm1 in (False, True) for unit in (False, True)}


def self_sum(X, r, norm1, want_grad):
    """``sum_{i,j} rho_ij^r`` over ordered pairs, its gradient in X and the count of coincident pairs."""
    return _SUMS[bool(norm1), r == 1.0][0](X, float(r), bool(want_grad))


def cross_sum(X, Y, r, norm1, want_grad):
    """``sum_{i,j} rho(x_i, y_j)^r``, its gradient in X and the count of coincident pairs."""
    return _SUMS[bool(norm1), r == 1.0][1](X, Y, float(r), bool(want_grad))


@njit(cache=True)
def _one_sided(delta, dv, rho, r, norm1):
    # right derivative at t=0 of rho(delta + t dv)^r for rho > 0
    d = delta.shape[0]
    if norm1:
        acc = 0.0
        for k in range(d):
            if delta[k] != 0.0:
                acc += _sign(delta[k]) * dv[k]
            else:
                acc += abs(dv[k])
        return r * rho ** (r - 1.0) * acc
    acc = 0.0
    for k in range(d):
        acc += delta[k] * dv[k]
    return r * rho ** (r - 2.0) * acc


@njit(cache=True)
def _singular(w, r):
    # right derivative at t=0 of (t w)^r; returns (finite part, is_infinite)
    if w == 0.0 or r > 1.0:
        return 0.0, False
    if r == 1.0:
        return w, False
    return 0.0, True


@njit(cache=True)
def self_dirderiv(X, V, r, norm1):
    """Right derivative of ``sum_{i,j} rho(x_i + t v_i, x_j + t v_j)^r`` at t=0+.

    Returns the finite part and the number of ordered pairs whose
    contribution is ``+inf`` (only possible for r < 1).
    """
    n, d = X.shape
    finite = 0.0
    n_inf = 0
    delta = np.empty(d)
    dv = np.empty(d)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(d):
                delta[k] = X[i, k] - X[j, k]
                dv[k] = V[i, k] - V[j, k]
            rho = _rho(X[i], X[j], norm1)
            if rho > 0.0:
                finite += _one_sided(delta, dv, rho, r, norm1)
            else:
                w = _rho(V[i], V[j], norm1)
                part, inf = _singular(w, r)
                finite += part
                if inf:
                    n_inf += 1
    return 2.0 * finite, 2 * n_inf


@njit(cache=True)
def cross_dirderiv(X, V, Y, r, norm1):
    """Right derivative of ``sum_{i,j} rho(x_i + t v_i, y_j)^r`` at t=0+."""
    n, d = X.shape
    m = Y.shape[0]
    finite = 0.0
    n_inf = 0
    delta = np.empty(d)
    zero = np.zeros(d)
    for i in range(n):
        for j in range(m):
            for k in range(d):
                delta[k] = X[i, k] - Y[j, k]
            rho = _rho(X[i], Y[j], norm1)
            if rho > 0.0:
                finite += _one_sided(delta, V[i], rho, r, norm1)
            else:
                part, inf = _singular(_rho(V[i], zero, norm1), r)
                finite += part
                if inf:
                    n_inf += 1
    return finite, n_inf

