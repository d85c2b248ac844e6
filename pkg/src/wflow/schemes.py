"""Time stepping: neural backward (proximal) steps, neural forward (steepest descent) steps and the particle ODE.

Each neural step trains a fresh generator ``T(x, z)`` with Adam, using one
latent draw per iteration, and pushes the cloud through it with a final
fresh draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .functionals import Functional, Linearization
from .measures import ParticleCloud, RandomSource, as_points
from .neural import AdamState, MlpParams, adam_step, init_mlp, loss_gradient, mlp_forward, mlp_forward_taped

__all__ = [
    "TrainConfig",
    "StepSchedule",
    "StepDiagnostics",
    "FlowTrace",
    "Dirac",
    "DiracSum",
    "UniformSquare",
    "Circle",
    "Gaussian",
    "Ellipse",
    "Cross",
    "SquareBoundary",
    "SteepestDescentUndefined",
    "CoincidentParticles",
    "FlowError",
    "backward_objective",
    "forward_objective",
    "backward_step",
    "forward_step",
    "particle_flow_step",
    "make_initial",
    "run_flow",
    "SCHEMES",
]

SCHEMES = ("backward", "forward", "particle")


class SteepestDescentUndefined(ValueError):
    """The directional derivative is unbounded below, so no steepest descent direction exists."""


class CoincidentParticles(ValueError):
    """The particle ODE needs pairwise distinct particles."""

    def __init__(self, pairs):
        self.pairs = pairs
        shown = ", ".join(f"({i}, {j})" for i, j in pairs[:5])
        more = f" and {len(pairs) - 5} more" if len(pairs) > 5 else ""
        super().__init__(f"particles must be pairwise distinct; coincident index pairs: {shown}{more}")


class FlowError(RuntimeError):
    """A step failed; ``t`` is the time at which the failing step started."""

    def __init__(self, t: float, step: int, cause: Exception):
        self.t, self.step, self.cause = t, step, cause
        super().__init__(f"step {step} starting at t={t:g} failed: {cause}")


@dataclass(frozen=True)
class TrainConfig:
    """Per-step training budget.

    The first ``first_steps`` steps train for ``first_iterations`` iterations
    (when given), later steps for ``iterations``. ``batch_size=None`` means
    the full cloud.
    """

    iterations: int = 1000
    lr: float = 1e-3
    hidden: tuple = (128, 128, 128)
    batch_size: int | None = None
    first_steps: int = 0
    first_iterations: int | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be a non-empty list of positive ints")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.first_iterations is not None and self.first_iterations < 1:
            raise ValueError("first_iterations must be >= 1")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    def iterations_for(self, step: int) -> int:
        if step < self.first_steps and self.first_iterations is not None:
            return self.first_iterations
        return self.iterations


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise-constant step size: ``tau_k`` applies from activation time ``t_k`` on."""

    entries: tuple

    def __post_init__(self):
        entries = tuple((float(t), float(tau)) for t, tau in self.entries)
        if not entries or entries[0][0] != 0.0:
            raise ValueError("a schedule must start at time 0")
        if any(b[0] <= a[0] for a, b in zip(entries, entries[1:])):
            raise ValueError("activation times must be strictly increasing")
        if any(not tau > 0 for _, tau in entries):
            raise ValueError("step sizes must be > 0")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def constant(cls, tau: float) -> "StepSchedule":
        return cls(((0.0, tau),))

    def tau_at(self, t: float) -> float:
        tau = self.entries[0][1]
        for start, value in self.entries:
            if t >= start - 1e-9 * max(1.0, abs(start)):
                tau = value
        return tau


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    t: float
    tau: float
    value: float
    scale: float | None = None
    loss: float | None = None


@dataclass
class FlowTrace:
    times: list = field(default_factory=list)
    clouds: list = field(default_factory=list)
    values: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def append(self, t, cloud, value):
        if self.times and not t > self.times[-1]:
            raise ValueError("trace times must increase")
        if self.clouds and (cloud.n, cloud.dim) != (self.clouds[0].n, self.clouds[0].dim):
            raise ValueError("all snapshots must share n and d")
        self.times.append(t)
        self.clouds.append(cloud)
        self.values.append(value)

    @property
    def snapshots(self):
        return list(zip(self.times, self.clouds))

    def __len__(self):
        return len(self.times)


# initial configurations


def _center(center):
    c = np.atleast_1d(np.asarray(center, dtype=np.float64))
    if c.ndim != 1:
        raise ValueError("center must be a vector")
    return c


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")


def _planar(name, c):
    if c.size != 2:
        raise ValueError(f"{name} is a planar configuration; center must have 2 coordinates")


@dataclass(frozen=True)
class Dirac:
    center: tuple = (0.0, 0.0)

    def sample(self, n, rng):
        return np.tile(_center(self.center), (n, 1))


@dataclass(frozen=True)
class DiracSum:
    """Particles split evenly over several centers; ``radius > 0`` spreads each group over a small square."""

    centers: tuple = ((-1.0, 0.0), (1.0, 0.0))
    radius: float = 0.0

    def sample(self, n, rng):
        centers = [_center(c) for c in self.centers]
        if not centers or len({c.size for c in centers}) != 1:
            raise ValueError("centers must be non-empty and share one dimension")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        sizes = [n // len(centers) + (k < n % len(centers)) for k in range(len(centers))]
        pts = np.concatenate([np.tile(c, (m, 1)) for c, m in zip(centers, sizes)])
        if self.radius > 0:
            pts = pts + rng.uniform(-self.radius, self.radius, pts.shape)
        return pts


@dataclass(frozen=True)
class UniformSquare:
    """Uniform in the axis-aligned cube ``center +- radius`` (any dimension)."""

    center: tuple = (0.0, 0.0)
    radius: float = 1e-9

    def sample(self, n, rng):
        _positive("radius", self.radius)
        c = _center(self.center)
        pts = c + rng.uniform(-self.radius, self.radius, (n, c.size))
        # tiny radii leave few representable values; redraw rows that collide
        for _ in range(100):
            _, first = np.unique(pts, axis=0, return_index=True)
            dup = np.setdiff1d(np.arange(n), first)
            if dup.size == 0:
                break
            pts[dup] = c + rng.uniform(-self.radius, self.radius, (dup.size, c.size))
        return pts


@dataclass(frozen=True)
class Circle:
    """Equispaced angles on a circle."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def sample(self, n, rng):
        _positive("radius", self.radius)
        c = _center(self.center)
        _planar("Circle", c)
        angle = 2.0 * np.pi * np.arange(n) / n
        return c + self.radius * np.column_stack([np.cos(angle), np.sin(angle)])


@dataclass(frozen=True)
class Gaussian:
    center: tuple = (0.0, 0.0)
    stddev: float = 1.0

    def sample(self, n, rng):
        _positive("stddev", self.stddev)
        c = _center(self.center)
        return c + self.stddev * rng.normal((n, c.size))


@dataclass(frozen=True)
class Ellipse:
    """Equispaced parameter angles on an ellipse with the given semi-axes."""

    center: tuple = (0.0, 0.0)
    semi_axes: tuple = (1.0, 0.5)

    def sample(self, n, rng):
        a, b = self.semi_axes
        _positive("semi-axis", a)
        _positive("semi-axis", b)
        c = _center(self.center)
        _planar("Ellipse", c)
        angle = 2.0 * np.pi * np.arange(n) / n
        return c + np.column_stack([a * np.cos(angle), b * np.sin(angle)])


@dataclass(frozen=True)
class Cross:
    """Equispaced points on the horizontal and vertical segments of half-length ``radius``."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def sample(self, n, rng):
        _positive("radius", self.radius)
        c = _center(self.center)
        _planar("Cross", c)
        h = (n + 1) // 2
        v = n - h
        horiz = np.linspace(-self.radius, self.radius, h)
        # the vertical arm alternates above and below the center, which the horizontal arm owns
        k = np.arange(v)
        vert = np.where(k % 2 == 0, 1.0, -1.0) * self.radius * (k // 2 + 1) / max(1, -(-v // 2))
        pts = np.concatenate([np.column_stack([horiz, np.zeros(h)]), np.column_stack([np.zeros(v), vert])])
        return c + pts


@dataclass(frozen=True)
class SquareBoundary:
    """Uniform samples on the boundary of the square ``center +- radius``."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def sample(self, n, rng):
        _positive("radius", self.radius)
        c = _center(self.center)
        _planar("SquareBoundary", c)
        side = rng.integers(0, 4, n)
        u = rng.uniform(-self.radius, self.radius, n)
        x = np.choose(side, [u, np.full(n, self.radius), u, np.full(n, -self.radius)])
        y = np.choose(side, [np.full(n, -self.radius), u, np.full(n, self.radius), u])
        return c + np.column_stack([x, y])


def make_initial(init, n: int, rng: RandomSource) -> ParticleCloud:
    if n < 1:
        raise ValueError("n must be >= 1")
    return ParticleCloud(init.sample(n, rng))


# losses


def _batch(n, cfg: TrainConfig, rng):
    if cfg.batch_size is None or cfg.batch_size >= n:
        return None
    return rng.choice(n, cfg.batch_size)


def backward_objective(f: Functional, X, Z, tau: float, p: MlpParams):
    """Loss ``(1/2 tau B) sum |x_i - T(x_i, z_i)|^2 + F(empirical measure of the T(x_i, z_i))``."""
    X = as_points(X)
    scale = 1.0 / (2.0 * tau * X.shape[0])

    def loss(tape, weights):
        T = mlp_forward_taped(tape, weights, p, X, Z)
        return ad.sum_squares(T - X) * scale + f.taped_value(T)

    return loss


def forward_objective(lin: Linearization, X, Z, p: MlpParams, rows=None, frozen=None):
    """Loss ``D(T) / sqrt(mean |T|^2)``: the directional derivative per unit speed.

    ``frozen`` masks particles whose motion costs +inf; their velocity is zero.
    """
    X = as_points(X)

    def loss(tape, weights):
        T = mlp_forward_taped(tape, weights, p, X, Z)
        if frozen is not None:
            T = T * frozen[:, None]
        speed = ad.sqrt(ad.sum_squares(T) * (1.0 / X.shape[0]))
        return lin.taped(T, rows) / speed

    return loss


def _train(p: MlpParams, objective, n, d, cfg: TrainConfig, iterations, rng: RandomSource):
    """Adam loop; ``objective(rows, Z, p)`` builds the loss for one batch and latent draw."""
    state = AdamState.zeros_like(p, cfg.lr)
    last = math.nan
    for _ in range(iterations):
        rows = _batch(n, cfg, rng)
        Z = rng.normal((n if rows is None else rows.size, d))
        value, grads = loss_gradient(objective(rows, Z, p), p)
        if not math.isfinite(value):
            continue  # all outputs zero: no direction to normalize
        last = value
        p = adam_step(p, grads, state)
    return p, last


def backward_step(c, f: Functional, tau: float, cfg: TrainConfig, rng: RandomSource, iterations=None):
    """One proximal step; returns ``(new cloud, trained params, last training loss)``."""
    _positive("tau", tau)
    X = as_points(c)
    n, d = X.shape

    def objective(rows, Z, p):
        return backward_objective(f, X if rows is None else X[rows], Z, tau, p)

    p, last = _train(init_mlp(rng, d, cfg.hidden), objective, n, d, cfg, iterations or cfg.iterations, rng)
    out = mlp_forward(p, X, rng.normal((n, d)))
    return ParticleCloud(out), p, last


def _frozen_rows(lin: Linearization, n):
    rows = [a.rows for a in lin.anchors if a.r < 1.0]
    if not rows:
        return None
    mask = np.ones(n)
    mask[np.concatenate(rows)] = 0.0
    return mask


def forward_step(c, f: Functional, tau: float, cfg: TrainConfig, rng: RandomSource, iterations=None):
    """One steepest-descent step; returns ``(new cloud, scale, last training loss)``.

    Raises :class:`SteepestDescentUndefined` when a coincident pair with
    ``r < 1`` makes the directional derivative unbounded below.
    """
    _positive("tau", tau)
    X = as_points(c)
    n, d = X.shape
    lin = f.linearization(X)
    bad = [p for p in lin.pairs if p.r < 1.0]
    if bad:
        raise SteepestDescentUndefined(
            f"{sum(p.rows.size for p in bad)} coincident particles with r={bad[0].r} < 1: "
            "the directional derivative is -inf along any separating direction"
        )
    if lin.vanishes:
        return ParticleCloud(X), 0.0, 0.0
    frozen = _frozen_rows(lin, n)

    def objective(rows, Z, p):
        if rows is None:
            return forward_objective(lin, X, Z, p, None, frozen)
        return forward_objective(lin, X[rows], Z, p, rows, None if frozen is None else frozen[rows])

    p, last = _train(init_mlp(rng, d, cfg.hidden), objective, n, d, cfg, iterations or cfg.iterations, rng)
    V = mlp_forward(p, X, rng.normal((n, d)))
    if frozen is not None:
        V = V * frozen[:, None]
    speed2 = float(np.mean(np.sum(V * V, axis=1)))
    if speed2 == 0.0:
        return ParticleCloud(X), 0.0, last
    deriv = lin.evaluate(V)
    scale = max(-deriv / speed2, 0.0)
    return ParticleCloud(X + tau * scale * V), scale, last


def _coincident_pairs(X):
    _, inverse, counts = np.unique(X + 0.0, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    pairs = []
    for g in np.flatnonzero(counts > 1):
        idx = np.flatnonzero(inverse == g)
        pairs.extend((int(idx[0]), int(j)) for j in idx[1:])
    return sorted(pairs)


def particle_flow_step(c, f: Functional, tau: float) -> ParticleCloud:
    """Explicit Euler step of ``u' = -N grad F_N(u)``."""
    _positive("tau", tau)
    X = as_points(c)
    pairs = _coincident_pairs(X)
    if pairs:
        raise CoincidentParticles(pairs)
    return ParticleCloud(X - tau * X.shape[0] * f.gradient(X))


def run_flow(scheme, f, init, n, schedule, horizon, cfg=None, rng=None, on_step=None) -> FlowTrace:
    """Iterate a scheme from ``t = 0`` until ``t >= horizon``.

    ``init`` is an initializer or a ready cloud. Snapshot times are exact
    (``math.fsum``) partial sums of the step sizes. ``on_step(trace)`` is
    called after every step.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    _positive("horizon", horizon)
    if isinstance(schedule, (int, float)):
        schedule = StepSchedule.constant(schedule)
    if scheme != "particle" and cfg is None:
        raise ValueError(f"the {scheme} scheme needs a TrainConfig")
    rng = rng if rng is not None else RandomSource(0)
    cloud = init if isinstance(init, ParticleCloud) else make_initial(init, n, rng.spawn())
    trace = FlowTrace()
    trace.append(0.0, cloud, f.value(cloud.points))
    taus = []
    step = 0
    while trace.times[-1] < horizon - 1e-9 * max(1.0, horizon):
        t = trace.times[-1]
        tau = schedule.tau_at(t)
        scale = loss = None
        try:
            if scheme == "particle":
                cloud = particle_flow_step(cloud, f, tau)
            elif scheme == "forward":
                cloud, scale, loss = forward_step(cloud, f, tau, cfg, rng.spawn(), cfg.iterations_for(step))
            else:
                cloud, _, loss = backward_step(cloud, f, tau, cfg, rng.spawn(), cfg.iterations_for(step))
        except (ValueError, FloatingPointError) as exc:
            raise FlowError(t, step + 1, exc) from exc
        taus.append(tau)
        t_next = math.fsum(taus)
        value = f.value(cloud.points)
        trace.append(t_next, cloud, value)
        trace.diagnostics.append(StepDiagnostics(step + 1, t, tau, value, scale, loss))
        step += 1
        if on_step is not None:
            on_step(trace)
    return trace
