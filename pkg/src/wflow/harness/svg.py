"""Static scatter plots as SVG."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from ..measures import as_points

__all__ = ["emit_svg", "auto_bounds"]

SIZE = 600
DOT_RADIUS = 1.5


def auto_bounds(points) -> tuple[float, float, float, float]:
    """``(xmin, xmax, ymin, ymax)`` of the points, padded by 5% of each span."""
    pts = as_points(points)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def emit_svg(cloud, bounds=None, path="cloud.svg") -> None:
    pts = as_points(cloud)
    if pts.shape[1] != 2:
        raise ValueError(f"SVG output needs planar points, got dimension {pts.shape[1]}")
    xmin, xmax, ymin, ymax = bounds if bounds else auto_bounds(pts)
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"empty plotting window {bounds}")
    px = (pts[:, 0] - xmin) / (xmax - xmin) * SIZE
    py = (ymax - pts[:, 1]) / (ymax - ymin) * SIZE
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">',
        f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>',
    ]
    lines += [f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{DOT_RADIUS}" fill="black"/>' for x, y in zip(px, py)]
    lines.append("</svg>\n")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write("\n".join(lines))
    os.replace(tmp, path)
