import math

import numpy as np
import pytest
from scipy import integrate, stats

from levypass import stable_law as sl


def test_series_matches_half_stable_closed_form():
    z = np.geomspace(0.05, 50, 400)
    v, _, conv = sl._series(0.5, z)
    assert conv.all()
    assert np.max(np.abs(v / sl.half_stable_density(z) - 1)) < 1e-10


def test_public_density_matches_closed_form():
    z = np.geomspace(0.05, 50, 400)
    assert np.max(np.abs(sl.h1(0.5, z) / sl.half_stable_density(z) - 1)) < 1e-10


def test_half_stable_agrees_with_scipy_levy():
    # index 1/2 with Laplace exponent lam**0.5 is the Levy law with scale 1/2
    z = np.geomspace(0.01, 100, 50)
    assert np.allclose(sl.h1(0.5, z), stats.levy.pdf(z, scale=0.5), rtol=1e-10)
    assert np.allclose(sl.cdf1(0.5, z), stats.levy.cdf(z, scale=0.5), rtol=1e-8, atol=1e-14)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.7, 0.9])
def test_density_normalised(alpha):
    assert abs(sl.expect_h1(alpha, lambda z: 1.0) - 1.0) < 1e-8


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_laplace_transform(alpha):
    for lam in (0.5, 1.0, 2.0):
        val = sl.expect_h1(alpha, lambda z: math.exp(-lam * z))
        assert abs(val - math.exp(-lam**alpha)) < 1e-8


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_scaling_identity(alpha):
    z = np.geomspace(0.1, 10, 30)
    for t in (0.3, 1.0, 4.0):
        sc = t ** (1 / alpha)
        lhs = sc * sl.density_h(alpha, t, z)
        rhs = sl.h1(alpha, z / sc)
        ok = rhs > 1e-250  # deep left tail underflows to zero on both sides
        assert np.array_equal(lhs[~ok] > 1e-250, rhs[~ok] > 1e-250)
        assert np.max(np.abs(lhs[ok] - rhs[ok]) / rhs[ok]) < 1e-12


@pytest.mark.parametrize("alpha", [0.5, 0.7])
def test_chapman_kolmogorov(alpha):
    s, t = 0.7, 1.3
    for z in (0.5, 2.0, 6.0):
        conv = integrate.quad(lambda y: sl.density_h(alpha, s, y) * sl.density_h(alpha, t, z - y), 0, z,
                              epsabs=1e-13, epsrel=1e-10, limit=300)[0]
        direct = sl.density_h(alpha, s + t, z)
        assert abs(conv / direct - 1) < 1e-6


def test_cdf_is_integral_of_density():
    for alpha in (0.4, 0.6):
        for x in (0.05, 0.5, 3.0, 20.0):
            num = integrate.quad(lambda y: sl.h1(alpha, y), 0, x, epsabs=1e-14, limit=200)[0]
            assert abs(sl.cdf1(alpha, x) - num) < 1e-9


def test_occupation_integral_two_routes():
    for alpha in (0.4, 0.5, 0.75):
        for z in (0.3, 1.0, 5.0):
            assert abs(sl.occupation_integral_quad(alpha, z) / sl.occupation_integral(alpha, z) - 1) < 1e-8


def test_nonpositive_arguments_have_zero_density():
    assert sl.h1(0.5, 0.0) == 0.0
    assert np.all(sl.h1(0.5, np.array([-1.0, -0.1])) == 0.0)
    with pytest.raises(ValueError):
        sl.density_h(0.5, 0.0, 1.0)


def test_index_validation():
    with pytest.raises(ValueError):
        sl.StableIndex(1.0)
    assert sl.StableIndex(0.25).gamma == 0.75


def test_bridge_query_validation():
    with pytest.raises(ValueError):
        sl.BridgeQuery(1.0, 1.0, (0.5,), (1.5,))
    with pytest.raises(ValueError):
        sl.BridgeQuery(1.0, 1.0, (0.6, 0.4), (0.1, 0.2))


def test_bridge_fdd_integrates_to_one():
    q = lambda y: sl.bridge_fdd(sl.BridgeQuery(1.5, 2.0, (0.4,), (y,)), 0.5)  # noqa: E731
    assert abs(integrate.quad(q, 0, 2.0, limit=200)[0] - 1) < 1e-7


def test_fast_tables_match_direct_evaluation():
    z = np.geomspace(0.02, 200, 200)
    for alpha in (0.5, 0.7):
        h = sl.h1(alpha, z)
        ok = h > 1e-250
        assert np.max(np.abs(np.exp(sl.log_h1_fast(alpha, z[ok])) / h[ok] - 1)) < 1e-5
        p = np.linspace(0.01, 0.99, 25)
        assert np.max(np.abs(sl.cdf1(alpha, sl.ppf1_fast(alpha, p)) - p)) < 1e-6


def test_bridge_sampler_matches_conditional_law():
    rng = np.random.default_rng(3)
    alpha, t, z, s = 0.5, 2.0, 3.0, 0.3
    draws = np.array([sl.sample_bridge(alpha, t, z, s, rng) for _ in range(3000)])
    grid = np.linspace(0.0, z, 4001)[1:-1]
    dens = np.array([sl.bridge_fdd(sl.BridgeQuery(t, z, (s,), (y,)), alpha) for y in grid])
    cdf = np.concatenate([[0.0], integrate.cumulative_trapezoid(dens, grid)])
    cdf /= cdf[-1]
    ks = stats.kstest(draws, lambda x: np.interp(x, grid, cdf)).pvalue
    assert ks > 1e-3
