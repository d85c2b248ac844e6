"""Empirical measures, seeded randomness and 1D / radial Wasserstein distances."""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ParticleCloud",
    "RandomSource",
    "QuantileCurve",
    "as_points",
    "w2_1d",
    "radial_project",
    "w2_radial",
    "sample_latent",
    "empirical_quantile",
    "read_points",
    "write_points",
]


@dataclass(frozen=True, eq=False)
class ParticleCloud:
    """Uniformly weighted empirical measure ``(1/N) sum_i delta_{x_i}``.

    The point array is copied on construction and marked read-only.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"points must be an (N, d) array, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"a cloud needs N >= 1 and d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)

    def __repr__(self):
        return f"ParticleCloud(n={self.n}, dim={self.dim})"


def as_points(c) -> np.ndarray:
    """Return the ``(N, d)`` float array behind a cloud or array-like."""
    if isinstance(c, ParticleCloud):
        return c.points
    pts = np.asarray(c, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


class RandomSource:
    """Seeded stream on a counter-based bit generator (Philox).

    Single consumer. Use :meth:`spawn` to hand independent streams to
    sub-tasks; children are a deterministic function of the parent seed
    and the number of children spawned so far.
    """

    def __init__(self, seed=0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed) & (2**64 - 1))
        self.generator = np.random.Generator(np.random.Philox(self._seq))

    @property
    def seed(self):
        return self._seq.entropy

    def spawn(self) -> "RandomSource":
        (child,) = self._seq.spawn(1)
        return RandomSource(child)

    def normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def uniform(self, low=0.0, high=1.0, shape=None) -> np.ndarray:
        return self.generator.uniform(low, high, shape)

    def beta(self, a, b, shape) -> np.ndarray:
        return self.generator.beta(a, b, shape)

    def choice(self, n: int, size: int) -> np.ndarray:
        """``size`` distinct indices from ``range(n)``, in sorted order."""
        return np.sort(self.generator.choice(n, size=size, replace=False))

    def integers(self, low, high, shape=None) -> np.ndarray:
        return self.generator.integers(low, high, shape)


@dataclass(frozen=True)
class QuantileCurve:
    """Quantile function sampled on a probability grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("grid and values must be 1D arrays of equal length")
        if np.any(grid <= 0) or np.any(grid >= 1) or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing inside (0, 1)")
        if np.any(np.diff(values) < 0):
            raise ValueError("quantile values must be nondecreasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


def empirical_quantile(c, grid) -> QuantileCurve:
    """Quantile curve ``Q(p) = min{x : F(x) >= p}`` of a 1D cloud."""
    x = np.sort(_as_line(c))
    grid = np.asarray(grid, dtype=np.float64)
    idx = np.ceil(grid * x.size - 1e-12).astype(int) - 1
    return QuantileCurve(grid, x[np.clip(idx, 0, x.size - 1)])


def _as_line(c) -> np.ndarray:
    pts = as_points(c)
    if pts.shape[1] != 1:
        raise ValueError(f"expected a 1D cloud, got dimension {pts.shape[1]}")
    return pts[:, 0]


def w2_1d(a, b) -> float:
    """W2 between two equal-size 1D clouds via sorted matching."""
    xa, xb = _as_line(a), _as_line(b)
    if xa.size != xb.size:
        raise ValueError(f"w2_1d needs equal sizes, got {xa.size} and {xb.size}")
    diff = np.sort(xa) - np.sort(xb)
    return float(np.sqrt(np.mean(diff * diff)))


def radial_project(c) -> ParticleCloud:
    """Push a cloud forward under the Euclidean norm."""
    return ParticleCloud(np.linalg.norm(as_points(c), axis=1)[:, None])


def w2_radial(a, b) -> float:
    """W2 between the radial projections; exact W2 for rotation-invariant laws."""
    pa, pb = as_points(a), as_points(b)
    if pa.shape != pb.shape:
        raise ValueError(f"w2_radial needs equal shapes, got {pa.shape} and {pb.shape}")
    return w2_1d(radial_project(pa), radial_project(pb))


def sample_latent(rng: RandomSource, n: int, d: int) -> ParticleCloud:
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    return ParticleCloud(rng.normal((n, d)))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_points(path, c, t: float | None = None) -> None:
    """Write a cloud as CSV with header ``[t,]x0,...,x{d-1}``.

    Floats use 17 significant digits, so reading back is bit exact. The
    file is written to a temporary sibling and renamed into place.
    """
    pts = as_points(c)
    header = [f"x{k}" for k in range(pts.shape[1])]
    if t is not None:
        header = ["t"] + header
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            tt = [] if t is None else [_fmt(t)]
            for row in pts:
                fh.write(",".join(tt + [_fmt(v) for v in row]) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_points(path) -> tuple[ParticleCloud, float | None]:
    """Read a point-cloud CSV; returns the cloud and the ``t`` column value if present."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_t = bool(header) and header[0] == "t"
    coords = header[1:] if has_t else header
    if coords != [f"x{k}" for k in range(len(coords))] or not coords:
        raise ValueError(f"{path}: bad header {rows[0]!r}")
    width = len(header)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        data.append([float(v) for v in row])
    if not data:
        raise ValueError(f"{path}: no particles")
    arr = np.array(data, dtype=np.float64)
    t = None
    if has_t:
        t = float(arr[0, 0])
        arr = arr[:, 1:]
    return ParticleCloud(arr), t
