"""
When does steepest descent exist?
=================================

At a point mass the one-sided derivative of the Riesz interaction energy
in a splitting direction behaves like ``t^r``. For ``r > 1`` it vanishes,
so the forward scheme never leaves the Dirac. For ``r < 1`` it is minus
infinity and no steepest descent direction exists. Only ``r = 1`` moves.
"""

import numpy as np

from wflow.functionals import InteractionEnergy, RieszKernel, directional_derivative
from wflow.measures import RandomSource
from wflow.schemes import SteepestDescentUndefined, TrainConfig, forward_step

X = np.zeros((200, 2))
V = RandomSource(0).normal((200, 2))
cfg = TrainConfig(iterations=200, hidden=(32, 32))

for r in (0.5, 1.0, 1.5):
    f = InteractionEnergy(RieszKernel(r))
    print(f"r={r}: derivative along a random split {directional_derivative(f, X, V):.4g}")
    try:
        cloud, scale, _ = forward_step(X, f, 0.05, cfg, RandomSource(1))
    except SteepestDescentUndefined as exc:
        print(f"    forward step refused: {exc}")
        continue
    spread = np.linalg.norm(cloud.points, axis=1).max()
    print(f"    forward step scale {scale:.4f}, largest radius after one step {spread:.4f}")
