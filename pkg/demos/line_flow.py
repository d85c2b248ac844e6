"""
Discrepancy flow on the line
============================

On the real line the flow of the distance-kernel discrepancy toward
``delta_0`` from ``delta_{-1}`` is known in closed form: the mass spreads
into a uniform segment ``[-1, -1 + 2t]``, reaches the origin at ``t = 1/2``
and from then on piles up into an atom at 0.
"""

import numpy as np

from wflow import analytic
from wflow.functionals import MmdToTarget, RieszKernel
from wflow.measures import w2_1d
from wflow.schemes import UniformSquare, run_flow

n = 1000
f = MmdToTarget(RieszKernel(1.0), np.zeros((1, 1)))
trace = run_flow("particle", f, UniformSquare((-1.0,), 1e-9), n, 0.01, 1.0)

for t, cloud in trace.snapshots[::20]:
    exact = analytic.line_flow_sample(t, n)
    at_zero = np.mean(np.abs(cloud.points) < 1e-3)
    print(f"t={t:.2f}  W2 to exact {w2_1d(cloud, exact):.2e}  mass near 0 {at_zero:.3f}")

# %%
# The exact atom at t = 1 carries half of the mass.

print("exact mass at 0 when t=1:", np.mean(analytic.line_flow_sample(1.0, n).points == 0.0))
