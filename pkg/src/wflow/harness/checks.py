"""Quick numerical self-checks behind ``wflow gradcheck`` and ``wflow selftest``."""

from __future__ import annotations

import math

import numpy as np

from .. import analytic
from ..functionals import InteractionEnergy, MmdToTarget, RieszKernel, directional_derivative, mmd_squared
from ..measures import RandomSource
from ..neural import MlpParams, init_mlp, loss_gradient
from ..schemes import backward_objective, forward_objective

__all__ = ["finite_difference_gradient", "relative_error", "gradcheck_losses", "selftest"]


def finite_difference_gradient(loss_fn, p: MlpParams, h: float = 1e-6) -> list[np.ndarray]:
    """Central differences of ``loss_fn(tape, weights)`` in every parameter entry."""
    arrays = [a.copy() for a in p.arrays()]
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            up, _ = loss_gradient(loss_fn, MlpParams.from_arrays(arrays))
            a[idx] = old - h
            down, _ = loss_gradient(loss_fn, MlpParams.from_arrays(arrays))
            a[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(a, b) -> float:
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _losses(seed):
    rng = RandomSource(seed)
    d, n = 2, 6
    X = rng.normal((n, d))
    Z = rng.normal((n, d))
    target = rng.normal((4, d))
    k = RieszKernel(1.0)
    cases = {}
    for name, f in (("backward/interaction", InteractionEnergy(k)), ("backward/mmd", MmdToTarget(k, target))):
        cases[name] = lambda p, f=f: backward_objective(f, X, Z, 0.05, p)
    dirac = np.zeros((n, d))
    lin_dirac = InteractionEnergy(k).linearization(dirac)
    lin_mmd = MmdToTarget(RieszKernel(1.5), target).linearization(X)
    cases["forward/dirac"] = lambda p: forward_objective(lin_dirac, dirac, Z, p)
    cases["forward/mmd"] = lambda p: forward_objective(lin_mmd, X, Z, p)
    return cases, rng, d


def gradcheck_losses(seed: int = 0, hidden=(8, 8)) -> dict[str, float]:
    """Relative error between taped gradients and central differences for both training losses."""
    cases, rng, d = _losses(seed)
    p = init_mlp(rng, d, hidden)
    # small nonzero biases keep rectifier inputs away from exact zeros
    p = MlpParams(tuple((W, 0.1 * rng.normal(b.shape)) for W, b in p.layers))
    errors = {}
    for name, make in cases.items():
        loss_fn = make(p)
        _, grads = loss_gradient(loss_fn, p)
        errors[name] = relative_error(grads, finite_difference_gradient(loss_fn, p))
    return errors


def selftest() -> list[tuple[str, bool, str]]:
    """Fast oracle checks; returns ``(name, passed, detail)`` per check."""
    results = []

    def check(name, passed, detail):
        results.append((name, bool(passed), detail))

    seq = analytic.jko_time_sequence(1.0, 0.05, 200)
    err = float(np.max(np.abs(seq.values - 0.05 * np.arange(201))))
    check("proximal times at r=1 are n*tau", err <= 1e-12, f"max error {err:.2e}")
    s = analytic.eta_star_params(2, 1.0).s
    check("ball radius at d=2, r=1 is pi/4", abs(s - math.pi / 4) <= 1e-12, f"s={s!r}")
    c = analytic.eta_star_params(3, 1.0).c
    check("sphere radius at d=3, r=1 is 2/3", abs(c - 2 / 3) <= 1e-10, f"c={c!r}")
    k = RieszKernel(1.0)
    v = mmd_squared(k, [[0.0], [2.0]], [[1.0]])
    check("discrepancy of {0,2} and {1}", abs(v - 0.5) <= 1e-15, f"{v!r}")
    dd = directional_derivative(InteractionEnergy(k), [[0.0], [0.0]], [[1.0], [-1.0]])
    check("one-sided derivative at a coincident pair", abs(dd + 0.5) <= 1e-15, f"{dd!r}")
    errors = gradcheck_losses()
    worst = max(errors.values())
    check("training-loss gradients vs central differences", worst <= 1e-5, f"worst relative error {worst:.2e}")
    return results
