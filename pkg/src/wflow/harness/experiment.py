"""Running configured experiments and scoring traces against reference measures."""

from __future__ import annotations

import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import analytic
from ..functionals import RieszKernel, mmd_squared, mmd_squared_1d_fast
from ..measures import ParticleCloud, RandomSource, read_points, w2_radial, write_points
from ..schemes import FlowTrace, run_flow
from .config import ExperimentConfig
from .svg import auto_bounds, emit_svg

__all__ = [
    "MetricRow",
    "RunResult",
    "run_experiment",
    "compare_to_analytic",
    "read_trace_dir",
    "write_metrics",
    "read_metrics",
    "METRIC_COLUMNS",
]

METRIC_COLUMNS = ("t", "functional", "mmd_to_reference", "w2_radial_to_reference")
_DISTANCE = RieszKernel(1.0)


@dataclass(frozen=True)
class MetricRow:
    t: float
    mmd_to_reference: float | None = None
    w2_radial_to_reference: float | None = None
    functional: float | None = None


@dataclass
class RunResult:
    config: ExperimentConfig
    trace: FlowTrace
    metrics: list
    files: list


def _mmd(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[1] == 1:
        value = mmd_squared_1d_fast(_DISTANCE, a, b)
    else:
        value = mmd_squared(_DISTANCE, a, b)
    return math.sqrt(max(value, 0.0))


def compare_to_analytic(trace, d: int, r: float, seed: int = 0) -> list[MetricRow]:
    """Distance of each snapshot to the exact interaction-energy flow from a Dirac at the origin.

    At every time the reference is the same base sample of the profile,
    drawn with ``seed`` and rescaled to time ``t``. Reports the square root
    of the distance-kernel discrepancy and the radial W2 distance.
    """
    snapshots = trace.snapshots if isinstance(trace, FlowTrace) else list(trace)
    rows = []
    for t, cloud in snapshots:
        pts = np.asarray(cloud.points if isinstance(cloud, ParticleCloud) else cloud, dtype=np.float64)
        if pts.shape[1] != d:
            raise ValueError(f"snapshot at t={t} has dimension {pts.shape[1]}, expected {d}")
        ref = analytic.sample_flow(d, r, t, pts.shape[0], RandomSource(seed))
        rows.append(MetricRow(t, _mmd(pts, ref.points), w2_radial(pts, ref)))
    return rows


def _fmt(v) -> str:
    return "" if v is None else format(float(v), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_metrics(path, rows, columns=METRIC_COLUMNS) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(getattr(row, c)) for c in columns))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def read_metrics(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return [{k: (float(v) if v else None) for k, v in zip(header, line.split(","))} for line in lines[1:] if line]


_STEP_FILE = re.compile(r"step_(\d+)\.csv$")


def read_trace_dir(path) -> list[tuple[float, ParticleCloud]]:
    """Snapshots ``step_{k}.csv`` of a run directory, ordered by k."""
    files = sorted(
        ((int(m.group(1)), p) for p in Path(path).iterdir() if (m := _STEP_FILE.match(p.name))),
        key=lambda kp: kp[0],
    )
    if not files:
        raise ValueError(f"{path}: no step_*.csv files")
    out = []
    for k, p in files:
        cloud, t = read_points(p)
        if t is None:
            raise ValueError(f"{p}: missing t column")
        out.append((t, cloud))
    return out


def _reference_rows(cfg: ExperimentConfig, trace: FlowTrace, f, rng: RandomSource):
    if cfg.reference == "analytic":
        return compare_to_analytic(trace, cfg.d, cfg.kernel.r, seed=int(rng.integers(0, 2**63 - 1)))
    if cfg.reference == "line_flow":
        return [MetricRow(t, _mmd(c.points, analytic.line_flow_sample(t, c.n).points)) for t, c in trace.snapshots]
    if cfg.reference == "target":
        if hasattr(f, "target"):
            target = f.target
        else:
            # mixture of the components in proportion to their weights
            target = _mixture(f.components, rng)
        return [MetricRow(t, _mmd(c.points, target)) for t, c in trace.snapshots]
    return [MetricRow(t) for t in trace.times]


def _mixture(components, rng: RandomSource):
    sizes = [Y.shape[0] for _, Y in components]
    total = min(s / w for (w, _), s in zip(components, sizes) if w > 0)
    parts = []
    for (w, Y), s in zip(components, sizes):
        m = int(round(w * total))
        if m:
            parts.append(Y[rng.choice(s, min(m, s))])
    return np.concatenate(parts)


def run_experiment(cfg: ExperimentConfig, on_step=None) -> RunResult:
    """Run the flow, then write ``step_{k}.csv`` per snapshot, ``metrics.csv`` and optional SVGs."""
    root = RandomSource(cfg.seed)
    target_rng, init_rng, flow_rng, ref_rng = (root.spawn() for _ in range(4))
    f = cfg.build_functional(target_rng)
    init = ParticleCloud(cfg.initializer().sample(cfg.n, init_rng))
    trace = run_flow(cfg.scheme, f, init, cfg.n, cfg.schedule, cfg.horizon, cfg.train, flow_rng, on_step=on_step)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    for stale in out.glob("step_*.*"):
        stale.unlink()
    files = []
    for k, (t, cloud) in enumerate(trace.snapshots):
        path = out / f"step_{k}.csv"
        write_points(path, cloud, t)
        files.append(path)
    rows = [
        MetricRow(r.t, r.mmd_to_reference, r.w2_radial_to_reference, value)
        for r, value in zip(_reference_rows(cfg, trace, f, ref_rng), trace.values)
    ]
    columns = ("t",) + tuple(c for c in METRIC_COLUMNS[1:] if c in cfg.metrics)
    write_metrics(out / "metrics.csv", rows, columns)
    files.append(out / "metrics.csv")
    if cfg.svg:
        bounds = auto_bounds(np.concatenate([c.points for c in trace.clouds]))
        for k, cloud in enumerate(trace.clouds):
            path = out / f"step_{k}.svg"
            emit_svg(cloud, bounds, path)
            files.append(path)
    return RunResult(cfg, trace, rows, files)
