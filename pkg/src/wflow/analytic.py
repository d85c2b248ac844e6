"""Closed-form flows of the Riesz interaction energy and of the distance-kernel discrepancy on the line.

Starting at a Dirac, one proximal step of the interaction energy produces a
rescaled copy of a fixed profile: a radial density on a ball when
``d + r < 4`` and the uniform measure on a sphere otherwise. Iterating the
step multiplies the radius according to a scalar recursion, which this
module solves to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from .measures import ParticleCloud, RandomSource

__all__ = [
    "EtaStar",
    "JkoTimeSequence",
    "eta_star_params",
    "sample_eta_star",
    "sample_flow",
    "jko_time_sequence",
    "jko_residual",
    "limit_curve_scale",
    "scheme_scale_curve",
    "c6_bound",
    "subunit_gap_bound",
    "line_flow_quantile",
    "line_flow_sample",
]


def _check_r(r):
    if not 0.0 < r < 2.0:
        raise ValueError(f"Riesz exponent must lie in (0, 2), got {r}")


@dataclass(frozen=True)
class EtaStar:
    """Profile of the proximal step at a Dirac.

    ``kind == "ball"``: density ``A_s (s^2 - |x|^2)^exponent`` on the ball of
    radius ``s``. ``kind == "sphere"``: uniform on the sphere of radius ``c``.
    """

    d: int
    r: float
    kind: str
    radius: float
    exponent: float | None = None
    normalizer: float | None = None

    @property
    def s(self) -> float:
        if self.kind != "ball":
            raise AttributeError("s is defined for the ball profile only")
        return self.radius

    @property
    def c(self) -> float:
        if self.kind != "sphere":
            raise AttributeError("c is defined for the sphere profile only")
        return self.radius

    def density(self, x) -> np.ndarray:
        """Lebesgue density of the ball profile (zero outside the ball)."""
        if self.kind != "ball":
            raise ValueError("the sphere profile has no Lebesgue density")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        gap = self.radius**2 - np.sum(x * x, axis=1)
        out = np.zeros(gap.shape)
        inside = gap > 0
        out[inside] = self.normalizer * gap[inside] ** self.exponent
        return out


def _log_hyp2f1_unit(a, b, c):
    # Gauss: 2F1(a, b; c; 1) = G(c) G(c-a-b) / (G(c-a) G(c-b)), needs c - a - b > 0
    return gammaln(c) + gammaln(c - a - b) - gammaln(c - a) - gammaln(c - b)


def eta_star_params(d: int, r: float) -> EtaStar:
    _check_r(r)
    if d < 1:
        raise ValueError("d must be >= 1")
    if d + r < 4:
        log_s = (gammaln(2 - r / 2) + gammaln((d + r) / 2) + math.log(r) - math.log(d / 2) - gammaln(d / 2)) / (2 - r)
        s = math.exp(log_s)
        exponent = 1.0 - (r + d) / 2.0
        # normalizer so that the density integrates to one over the ball
        log_a = gammaln(d / 2) - (2 - r) * log_s - (d / 2) * math.log(math.pi) - betaln(d / 2, 2 - (r + d) / 2)
        return EtaStar(d, r, "ball", s, exponent, math.exp(log_a))
    a, b, cc = -r / 2, (2 - r - d) / 2, d / 2
    c = math.exp((math.log(r / 2) + _log_hyp2f1_unit(a, b, cc)) / (2 - r))
    return EtaStar(d, r, "sphere", c)


def _directions(rng, n, d):
    g = rng.normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        g[bad] = rng.normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


def sample_eta_star(p: EtaStar, n: int, rng: RandomSource) -> ParticleCloud:
    """Exact samples: uniform direction times a radius drawn through a Beta law."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = _directions(rng, n, p.d)
    if p.kind == "sphere":
        return ParticleCloud(p.radius * u)
    # (rho/s)^2 ~ Beta(d/2, 2 - (d+r)/2)
    w = rng.beta(p.d / 2, 2 - (p.d + p.r) / 2, n)
    return ParticleCloud(p.radius * np.sqrt(w)[:, None] * u)


def sample_flow(d: int, r: float, t: float, n: int, rng: RandomSource) -> ParticleCloud:
    """Samples of the exact interaction-energy flow from a Dirac at the origin at time ``t``."""
    p = eta_star_params(d, r)
    return ParticleCloud(limit_curve_scale(t, r) * sample_eta_star(p, n, rng).points)


def jko_residual(t, s, r, tau):
    """``s^{1/(2-r)} t^{(1-r)/(2-r)} - t + tau``, whose positive root advances the proximal times."""
    return s ** (1 / (2 - r)) * t ** ((1 - r) / (2 - r)) - t + tau


@dataclass(frozen=True)
class JkoTimeSequence:
    r: float
    tau: float
    values: np.ndarray

    def __getitem__(self, k):
        return self.values[k]

    def __len__(self):
        return len(self.values)


def _next_time(s, r, tau, tol=1e-12, max_iter=200):
    if s == 0.0:
        return tau
    q = 1 / (2 - r)
    a = s**q
    e = (1 - r) * q

    def h(t):
        return a * t**e - t + tau

    def dh(t):
        return a * e * t ** (e - 1) - 1

    lo = s
    hi = s + 2 * (2 - r) * tau + tau
    # h > 0 below the root and < 0 above it
    while h(lo) <= 0 and lo > 0:
        lo *= 0.5
    while h(hi) >= 0:
        hi = lo + 2 * (hi - lo)
    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        value = h(t)
        if abs(value) <= tol:
            return t
        if value > 0:
            lo = t
        else:
            hi = t
        slope = dh(t)
        step = t - value / slope if slope != 0 else math.nan
        t = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    if abs(h(t)) <= tol:
        return t
    raise RuntimeError(f"root of the time recursion did not converge (r={r}, tau={tau}, previous={s})")


def jko_time_sequence(r: float, tau: float, n_max: int) -> JkoTimeSequence:
    """``t_0 = 0, t_1 = tau, ...``: times at which the proximal iterates match the exact flow's profile."""
    _check_r(r)
    if not tau > 0:
        raise ValueError("tau must be > 0")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    values = [0.0]
    for _ in range(n_max):
        values.append(_next_time(values[-1], r, tau))
    return JkoTimeSequence(r, tau, np.array(values))


def limit_curve_scale(t: float, r: float) -> float:
    """Radius scale ``((2-r) t)^{1/(2-r)}`` of the exact flow."""
    _check_r(r)
    if t < 0:
        raise ValueError("t must be >= 0")
    return ((2 - r) * t) ** (1 / (2 - r))


def scheme_scale_curve(r: float, tau: float, t) -> np.ndarray | float:
    """Piecewise-constant radius scale of the proximal scheme: ``t_n^{1/(2-r)}`` on ``((n-1) tau, n tau]``."""
    _check_r(r)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    steps = np.where(t_arr > 0, np.ceil(t_arr / tau - 1e-9), 0).astype(int)
    seq = jko_time_sequence(r, tau, int(steps.max(initial=0)))
    out = seq.values[steps] ** (1 / (2 - r))
    return float(out) if np.ndim(t) == 0 else out


def c6_bound(r: float, tau: float, n: int) -> float:
    """Logarithmic bound on ``|t_n - (2-r) tau n|``: ``tau |r-1| (1 + (1 + ln n) / (4 - 2r))``.

    For ``r >= 1`` it bounds ``t_n - (2-r) tau n``; the mirrored form is meant
    for ``(2-r) tau n - t_n`` when ``r <= 1``. The mirrored form does not
    hold for small ``r`` (see :func:`subunit_gap_bound`).
    """
    _check_r(r)
    if n < 1:
        raise ValueError("n must be >= 1")
    return tau * abs(r - 1) * (1 + 1 / (4 - 2 * r) + math.log(n) / (4 - 2 * r))


def subunit_gap_bound(r: float, tau: float, n: int) -> float:
    """A valid bound on ``(2-r) tau n - t_n`` for ``r in (0, 1]``: ``tau (1-r) (3/2 + ln(n)/2)``.

    Uses ``t_{k-1} >= (k-1) tau``, which holds for ``r <= 1`` because each
    step advances the time by at least ``tau``.
    """
    _check_r(r)
    if r > 1:
        raise ValueError("this bound is for r <= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    return tau * (1 - r) * (1.5 + math.log(n) / 2)


def line_flow_quantile(t: float, p) -> np.ndarray | float:
    """Quantile function of the exact discrepancy flow toward ``delta_0`` started at ``delta_{-1}`` (distance kernel, d = 1)."""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise ValueError("p must lie in (0, 1)")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        out = np.full(p_arr.shape, -1.0)
    else:
        out = np.where(p_arr <= 1 / (2 * t), -1 + 2 * t * p_arr, 0.0)
    return float(out) if np.ndim(p) == 0 else out


def line_flow_sample(t: float, n: int) -> ParticleCloud:
    """Deterministic ``n``-point sample of the exact line flow at the midpoint quantiles ``(k + 1/2)/n``."""
    grid = (np.arange(n) + 0.5) / n
    return ParticleCloud(line_flow_quantile(t, grid)[:, None])
