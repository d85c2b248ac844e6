"""
Discrepancy barycenter of two shapes
====================================

Minimizing a weighted sum of squared discrepancies to several clouds with
a particle flow yields their barycenter. For this kernel it coincides with
the weighted mixture, so the particles end up split between a circle and
the boundary of a square.
"""

import math
from pathlib import Path

import numpy as np

from wflow.functionals import Barycenter, RieszKernel, mmd_squared
from wflow.harness.svg import emit_svg
from wflow.measures import RandomSource
from wflow.schemes import Circle, SquareBoundary, UniformSquare, make_initial, run_flow

rng = RandomSource(0)
kernel = RieszKernel(1.0)
circle = make_initial(Circle(), 500, rng.spawn()).points
square = make_initial(SquareBoundary(), 500, rng.spawn()).points
f = Barycenter(kernel, ((0.5, circle), (0.5, square)))

trace = run_flow("particle", f, UniformSquare((0.0, 0.0), 1e-9), 500, 0.5, 48.0, rng=rng.spawn())
mixture = np.vstack([circle, square])
for t, cloud in trace.snapshots[::16]:
    print(f"t={t:5.1f}  discrepancy to the mixture {math.sqrt(max(mmd_squared(kernel, cloud, mixture), 0)):.4f}")

emit_svg(trace.clouds[-1], path=Path("demo_output") / "barycenter.svg")
