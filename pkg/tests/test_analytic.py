import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from wflow import analytic
from wflow.measures import RandomSource, w2_radial

BALL_CASES = [(1, 0.5), (1, 1.5), (2, 0.5), (2, 1.0), (2, 1.9), (3, 0.4)]


def test_profile_examples():
    ball = analytic.eta_star_params(2, 1.0)
    assert ball.kind == "ball" and ball.s == pytest.approx(math.pi / 4, abs=1e-12)
    assert ball.exponent == -0.5
    sphere = analytic.eta_star_params(3, 1.0)
    assert sphere.kind == "sphere" and sphere.c == pytest.approx(2 / 3, abs=1e-10)
    assert analytic.eta_star_params(10, 1.0).kind == "sphere"
    with pytest.raises(ValueError):
        analytic.eta_star_params(2, 2.0)
    with pytest.raises(AttributeError):
        _ = sphere.s


def surface_area(d):
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@pytest.mark.parametrize("d, r", BALL_CASES)
def test_ball_density_has_unit_mass(d, r):
    p = analytic.eta_star_params(d, r)

    def radial(rho):
        return p.normalizer * (p.s**2 - rho**2) ** p.exponent * rho ** (d - 1)

    mass, _ = integrate.quad(radial, 0, p.s, limit=200)
    assert surface_area(d) * mass == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("d, r", BALL_CASES)
def test_beta_reduction_matches_integrated_density(d, r):
    p = analytic.eta_star_params(d, r)
    law = stats.beta(d / 2, 2 - (d + r) / 2)
    for u in (0.1, 0.4, 0.75, 0.95):
        rho = p.s * math.sqrt(u)
        mass, _ = integrate.quad(
            lambda x: p.normalizer * (p.s**2 - x**2) ** p.exponent * x ** (d - 1), 0, rho, limit=200
        )
        assert surface_area(d) * mass == pytest.approx(law.cdf(u), abs=1e-8)


def test_density_vanishes_outside_ball():
    p = analytic.eta_star_params(2, 1.0)
    assert p.density([[1.0, 0.0], [0.0, 0.0]]).tolist()[0] == 0.0
    assert p.density([[0.0, 0.0]])[0] == pytest.approx(p.normalizer * p.s ** (2 * p.exponent))


@pytest.mark.parametrize("d, r", [(2, 1.0), (3, 1.0), (1, 1.5), (5, 0.5)])
def test_samples_are_centered(d, r):
    n = 20_000
    p = analytic.eta_star_params(d, r)
    X = analytic.sample_eta_star(p, n, RandomSource(d)).points
    assert np.all(np.abs(X.mean(axis=0)) <= 3 * p.radius / math.sqrt(n))
    assert np.all(np.linalg.norm(X, axis=1) <= p.radius * (1 + 1e-12))


def test_radial_law_matches_beta_for_other_exponents():
    p = analytic.eta_star_params(2, 0.5)
    X = analytic.sample_eta_star(p, 10_000, RandomSource(9)).points
    u = np.sum(X**2, axis=1) / p.s**2
    assert stats.kstest(u, stats.beta(1, 2 - 1.25).cdf).statistic <= 0.02


def test_flow_samples_scale_along_a_geodesic():
    n = 10_000
    base = analytic.sample_eta_star(analytic.eta_star_params(2, 1.0), n, RandomSource(0)).points
    rms = math.sqrt(np.mean(np.sum(base**2, axis=1)))
    for k, (t1, t2) in enumerate([(0.2, 0.6), (0.4, 1.0), (0.1, 0.9)]):
        a = analytic.sample_flow(2, 1.0, t1, n, RandomSource(10 + k))
        b = analytic.sample_flow(2, 1.0, t2, n, RandomSource(20 + k))
        # radial profiles are rescaled copies, so the distance grows linearly in |t1 - t2|
        ratio = w2_radial(a, b) / abs(t1 - t2)
        assert ratio == pytest.approx(rms, abs=3 / math.sqrt(n))


def test_jko_time_examples():
    assert analytic.jko_time_sequence(1.0, 0.05, 3)[3] == pytest.approx(0.15, abs=1e-15)
    for r in (0.3, 1.0, 1.8):
        assert analytic.jko_time_sequence(r, 0.07, 1)[1] == 0.07
    assert analytic.jko_time_sequence(0.5, 0.1, 2)[2] == pytest.approx(0.23246, abs=2e-5)


def brentq_times(r, tau, n):
    # from s = 0 the recursion gives t_1 = tau directly
    out = [0.0, tau]
    for _ in range(n - 1):
        s = out[-1]
        h = lambda t, s=s: s ** (1 / (2 - r)) * t ** ((1 - r) / (2 - r)) - t + tau  # noqa: E731
        out.append(optimize.brentq(h, s, s + 4 * tau, xtol=1e-15, rtol=1e-15))
    return np.array(out)


@pytest.mark.parametrize("r", [0.25, 0.5, 1.5, 1.75])
def test_jko_times_match_independent_root_finder(r):
    seq = analytic.jko_time_sequence(r, 0.05, 60).values
    assert np.allclose(seq, brentq_times(r, 0.05, 60), rtol=0, atol=1e-11)


@pytest.mark.parametrize("r", [0.25, 0.5, 0.75, 1.25, 1.5, 1.75])
@pytest.mark.parametrize("tau", [0.01, 0.05])
def test_jko_residual_sign_structure_and_increments(r, tau):
    t = analytic.jko_time_sequence(r, tau, 200).values
    for n in range(2, 201):
        assert analytic.jko_residual(t[n] - 1e-6, t[n - 1], r, tau) > 0
        assert analytic.jko_residual(t[n] + 1e-6, t[n - 1], r, tau) < 0
    steps = np.diff(t)
    if r > 1:
        assert np.all(steps >= (2 - r) * tau - 1e-12)
    else:
        assert np.all(steps <= (2 - r) * tau + 1e-12)


@pytest.mark.parametrize("r", [1.0, 1.25, 1.5, 1.75])
def test_logarithmic_bound_above_one(r):
    for tau in (0.01, 0.05):
        t = analytic.jko_time_sequence(r, tau, 200).values
        for n in range(1, 201):
            gap = t[n] - (2 - r) * tau * n
            assert -1e-12 <= gap <= analytic.c6_bound(r, tau, n) + 1e-12


@pytest.mark.parametrize("r", [0.25, 0.5, 0.75])
def test_subunit_gap_bound_holds(r):
    for tau in (0.01, 0.05):
        t = analytic.jko_time_sequence(r, tau, 200).values
        for n in range(1, 201):
            gap = (2 - r) * tau * n - t[n]
            assert -1e-12 <= gap <= analytic.subunit_gap_bound(r, tau, n) + 1e-12


def test_mirrored_logarithmic_bound_fails_below_one():
    # the gap (2-r) tau n - t_n outgrows the mirrored bound for every r < 1 we tried
    for r, first_bad in ((0.25, 4), (0.75, 56)):
        t = analytic.jko_time_sequence(r, 0.01, 200).values
        bad = [n for n in range(1, 201) if (2 - r) * 0.01 * n - t[n] > analytic.c6_bound(r, 0.01, n)]
        assert bad and bad[0] == first_bad


def test_bound_examples():
    assert analytic.c6_bound(1.0, 0.05, 17) == 0.0
    assert analytic.c6_bound(1.5, 0.05, 10) == pytest.approx(0.025 * (2 + math.log(10)), abs=1e-15)
    assert analytic.c6_bound(1.25, 0.1, 1) == pytest.approx(0.1 * 0.25 * (1 + 1 / 1.5))
    with pytest.raises(ValueError):
        analytic.subunit_gap_bound(1.5, 0.1, 3)


def test_scale_curves():
    assert analytic.limit_curve_scale(2.0, 1.0) == 2.0
    assert analytic.limit_curve_scale(0.7, 1.5) == pytest.approx((0.5 * 0.7) ** 2)
    assert analytic.limit_curve_scale(0.0, 0.3) == 0.0
    assert analytic.scheme_scale_curve(1.0, 0.05, 0.12) == pytest.approx(0.15)
    grid = 0.05 * np.arange(1, 41)
    for r, sign in ((0.5, -1), (0.75, -1), (1.25, 1), (1.5, 1)):
        scheme = analytic.scheme_scale_curve(r, 0.05, grid)
        limit = np.array([analytic.limit_curve_scale(t, r) for t in grid])
        assert np.all(sign * (scheme - limit) > 0)


def test_line_flow_quantile():
    assert analytic.line_flow_quantile(0.25, 0.5) == -0.75
    assert analytic.line_flow_quantile(1.0, 0.9) == 0.0
    assert analytic.line_flow_quantile(0.0, 0.3) == -1.0
    grid = np.linspace(0.001, 0.999, 500)
    for t in (0.0, 0.2, 0.5, 0.8, 3.0):
        assert np.all(np.diff(analytic.line_flow_quantile(t, grid)) >= 0)
    with pytest.raises(ValueError):
        analytic.line_flow_quantile(0.5, 1.0)
    assert analytic.line_flow_sample(0.25, 4).points.ravel().tolist() == [-0.9375, -0.8125, -0.6875, -0.5625]
