import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wflow.functionals import (
    Barycenter,
    BranchingEnergy,
    InteractionEnergy,
    MmdToTarget,
    NonDifferentiableWarning,
    RieszKernel,
    ZeroFunctional,
    directional_derivative,
    functional_value,
    interaction_energy,
    kernel_eval,
    mmd_squared,
    mmd_squared_1d_fast,
    particle_gradient,
    potential_energy,
)
from wflow.measures import RandomSource

K1 = RieszKernel(1.0)


def col(*xs):
    return np.array(xs, dtype=float)[:, None]


def brute_energy(k, X):
    X = np.asarray(X, float)
    D = np.abs(X[:, None] - X[None]).sum(-1) if k.norm1 else np.linalg.norm(X[:, None] - X[None], axis=-1)
    return -(D**k.r).sum() / (2 * len(X) ** 2)


def test_kernel_range_and_norm():
    for bad in (0.0, 2.0, -1.0):
        with pytest.raises(ValueError):
            RieszKernel(bad)
    with pytest.raises(ValueError):
        RieszKernel(1.0, norm=3)
    assert kernel_eval(RieszKernel(1.0, norm=1), [0, 0], [3, 4]) == -7.0


def test_kernel_examples():
    assert kernel_eval(K1, [0, 0], [3, 4]) == -5.0
    assert kernel_eval(RieszKernel(0.5), [0.0], [4.0]) == -2.0
    for r in (0.3, 1.0, 1.7):
        assert kernel_eval(RieszKernel(r), [1.5, -2.0], [1.5, -2.0]) == 0.0


def test_interaction_energy_examples():
    assert interaction_energy(K1, col(3.0)) == 0.0
    assert interaction_energy(K1, col(0, 1)) == pytest.approx(-0.25, abs=1e-15)
    assert interaction_energy(K1, col(0, 1, 2)) == pytest.approx(-4 / 9, abs=1e-15)


def test_potential_energy_examples():
    assert potential_energy(K1, col(0), col(0)) == 0.0
    assert potential_energy(K1, col(0), col(1)) == 1.0
    assert potential_energy(K1, col(0, 2), col(1)) == 1.0
    with pytest.raises(ValueError, match="dimension"):
        potential_energy(K1, col(0), np.zeros((1, 2)))


def test_mmd_examples():
    X = RandomSource(0).normal((9, 3))
    assert abs(mmd_squared(K1, X, X)) <= 1e-15
    assert mmd_squared(K1, col(0), col(1)) == 1.0
    assert mmd_squared(K1, col(0, 2), col(1)) == 0.5
    with pytest.raises(ValueError):
        mmd_squared(K1, col(0), np.zeros((1, 2)))


def test_mmd_fast_path_examples():
    assert mmd_squared_1d_fast(K1, col(0), col(1)) == 1.0
    x = RandomSource(1).normal((40, 1))
    assert abs(mmd_squared_1d_fast(K1, x, x[::-1])) <= 1e-13
    with pytest.raises(ValueError):
        mmd_squared_1d_fast(RieszKernel(1.5), x, x)
    with pytest.raises(ValueError):
        mmd_squared_1d_fast(K1, np.zeros((2, 2)), np.zeros((2, 2)))


@pytest.mark.parametrize("r, norm, d", [(1.0, 2, 2), (0.5, 2, 3), (1.5, 2, 1), (1.0, 1, 2), (1.7, 1, 3)])
def test_kernels_match_brute_force(r, norm, d):
    k = RieszKernel(r, norm)
    X = RandomSource(int(10 * r) + norm + d).normal((37, d))
    assert interaction_energy(k, X) == pytest.approx(brute_energy(k, X), rel=1e-13)


# dyadic coordinates keep the translated clouds exact, so only the energy's own rounding is measured
dyadic = st.integers(-640, 640).map(lambda k: k / 64)
clouds_2d = st.integers(1, 12).flatmap(lambda n: st.lists(st.tuples(dyadic, dyadic), min_size=n, max_size=n))


@settings(max_examples=80, deadline=None)
@given(clouds_2d, clouds_2d, st.sampled_from([0.3, 1.0, 1.6]), st.tuples(dyadic, dyadic))
def test_mmd_nonnegative_and_translation_invariant(a, b, r, shift):
    k = RieszKernel(r)
    A, B = np.array(a), np.array(b)
    value = mmd_squared(k, A, B)
    assert value >= -1e-9
    moved = mmd_squared(k, A + np.array(shift), B + np.array(shift))
    assert abs(moved - value) < 1e-10


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
)
def test_fast_path_matches_quadratic_sum(a, b):
    A, B = np.array(a)[:, None], np.array(b)[:, None]
    assert mmd_squared_1d_fast(K1, A, B) == pytest.approx(mmd_squared(K1, A, B), abs=1e-9 * max(1.0, np.abs(A).max(), np.abs(B).max()))


def test_functional_value_examples():
    assert functional_value(InteractionEnergy(K1), [[1.0, 2.0]]) == 0.0
    Y = RandomSource(2).normal((6, 2))
    assert abs(functional_value(Barycenter(K1, ((1.0, Y),)), Y)) <= 1e-15
    assert functional_value(BranchingEnergy(), [[-1.0, 0.5]]) == 1.5
    with pytest.raises(ValueError):
        functional_value(MmdToTarget(K1, np.zeros((1, 2))), np.zeros((3, 1)))


def test_mmd_to_target_is_discrepancy_up_to_constant():
    rng = RandomSource(3)
    X, Y = rng.normal((8, 2)), rng.normal((5, 2))
    f = MmdToTarget(RieszKernel(1.3), Y)
    assert f.value(X) + interaction_energy(f.kernel, Y) == pytest.approx(mmd_squared(f.kernel, X, Y), abs=1e-14)


def test_barycenter_value_is_weighted_discrepancy():
    rng = RandomSource(4)
    X, Y1, Y2 = rng.normal((7, 2)), rng.normal((5, 2)), rng.normal((9, 2)) + 1
    f = Barycenter(K1, ((0.25, Y1), (0.75, Y2)))
    expected = 0.25 * mmd_squared(K1, X, Y1) + 0.75 * mmd_squared(K1, X, Y2)
    assert f.value(X) == pytest.approx(expected, abs=1e-14)


def test_functional_validation():
    with pytest.raises(ValueError):
        MmdToTarget(K1, np.zeros((0, 2)))
    with pytest.raises(ValueError, match="sum to 1"):
        Barycenter(K1, ((0.5, np.zeros((1, 2))), (0.6, np.ones((1, 2)))))
    with pytest.raises(ValueError):
        Barycenter(K1, ((0.5, np.zeros((1, 2))), (0.5, np.ones((1, 3)))))


def test_gradient_examples():
    g = particle_gradient(InteractionEnergy(K1), [[0.0, 0.0], [1.0, 0.0]])
    assert np.allclose(g, [[0.25, 0.0], [-0.25, 0.0]], atol=1e-15)
    assert np.array_equal(particle_gradient(InteractionEnergy(K1), [[0.0, 0.0]]), [[0.0, 0.0]])
    assert particle_gradient(MmdToTarget(K1, col(1)), col(0)).tolist() == [[-1.0]]


def central(f, X, h=1e-5):
    g = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        e = np.zeros_like(X)
        e[idx] = h
        g[idx] = (f.value(X + e) - f.value(X - e)) / (2 * h)
    return g


@pytest.mark.parametrize(
    "f",
    [
        InteractionEnergy(RieszKernel(0.6)),
        InteractionEnergy(RieszKernel(1.0, norm=1)),
        MmdToTarget(RieszKernel(1.8), np.array([[5.0, 5.0], [-5.0, 4.0]])),
        Barycenter(RieszKernel(1.2, norm=1), ((0.4, np.array([[6.0, 0.0]])), (0.6, np.array([[0.0, -6.0]])))),
        BranchingEnergy(),
    ],
    ids=["interaction", "interaction-l1", "mmd", "barycenter-l1", "branching"],
)
def test_gradient_matches_finite_differences(f):
    rng = RandomSource(7)
    X = rng.normal((6, 2))
    # keep away from the branching switch line and from coordinate ties
    X[:, 0] += np.sign(X[:, 0]) * 0.1
    assert np.linalg.norm(particle_gradient(f, X) - central(f, X)) <= 1e-5 * np.linalg.norm(central(f, X))


def test_gradient_warns_for_coincident_subunit_pairs():
    with pytest.warns(NonDifferentiableWarning):
        g = particle_gradient(InteractionEnergy(RieszKernel(0.5)), np.zeros((3, 2)))
    assert np.array_equal(g, np.zeros((3, 2)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        particle_gradient(InteractionEnergy(K1), np.zeros((3, 2)))


def test_directional_derivative_examples():
    f = InteractionEnergy(K1)
    assert directional_derivative(f, col(0, 0), col(1, -1)) == pytest.approx(-0.5, abs=1e-15)
    assert directional_derivative(InteractionEnergy(RieszKernel(1.5)), col(0, 0), col(1, -1)) == 0.0
    assert directional_derivative(f, col(0, 2), col(1, 0)) == pytest.approx(0.25, abs=1e-15)
    assert directional_derivative(InteractionEnergy(RieszKernel(0.5)), col(0, 0), col(1, -1)) == -math.inf
    assert directional_derivative(InteractionEnergy(RieszKernel(0.5)), col(0, 0), col(1, 1)) == 0.0
    with pytest.raises(ValueError):
        directional_derivative(f, col(0, 0), col(1))


def test_directional_derivative_of_subunit_attraction_is_plus_infinity():
    f = MmdToTarget(RieszKernel(0.5), col(0))
    assert directional_derivative(f, col(0), col(1)) == math.inf


def test_directional_derivative_is_homogeneous():
    rng = RandomSource(8)
    X = np.vstack([np.zeros((3, 2)), rng.normal((4, 2))])
    V = rng.normal((7, 2))
    f = MmdToTarget(K1, X[:2])
    assert directional_derivative(f, X, 2 * V) == pytest.approx(2 * directional_derivative(f, X, V), abs=1e-12)


def test_directional_derivative_matches_gradient_at_smooth_points():
    rng = RandomSource(9)
    X, V = rng.normal((6, 3)), rng.normal((6, 3))
    f = InteractionEnergy(RieszKernel(1.3))
    assert directional_derivative(f, X, V) == pytest.approx(float(np.sum(particle_gradient(f, X) * V)), abs=1e-13)


def test_branching_switching_direction():
    f = BranchingEnergy()
    # moving a particle from the active half-plane to the left adds |y| abruptly
    assert directional_derivative(f, [[0.0, 1.0]], [[-1.0, 0.0]]) == math.inf
    assert directional_derivative(f, [[0.0, 0.0]], [[-1.0, 2.0]]) == pytest.approx(3.0)


def test_zero_functional():
    f = ZeroFunctional()
    X = RandomSource(0).normal((4, 2))
    assert f.value(X) == 0.0
    assert not particle_gradient(f, X).any()
    assert directional_derivative(f, X, X) == 0.0
