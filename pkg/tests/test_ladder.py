import math

import numpy as np
import pytest
from scipy import stats

from levypass.ladder import (
    LadderError,
    PointMass,
    WalkSpec,
    calibration_walk,
    check_prop_q,
    check_vigon_direct,
    check_vigon_inverse,
    estimate_ladder,
    finite_mean_check,
    killing_consistency,
    overshoot_killed_subordinator,
    renewal_slope_check,
)
from levypass.model import Pareto, Weibull

# downward steps of the calibration walk are exponential with this mean
DOWN_MEAN = (0.3 * 0.5 + 0.5) / 0.7


@pytest.fixture(scope="module")
def calib():
    return estimate_ladder(calibration_walk(), 100_000, seed=1)


def test_calibration_walk_mean():
    w = calibration_walk()
    assert w.mean == pytest.approx(-0.5, abs=1e-14)
    assert w.down.scale == pytest.approx(DOWN_MEAN)


def test_walk_must_drift_down():
    with pytest.raises(LadderError):
        WalkSpec(Pareto(3.0), 0.5, Weibull(1.0, 0.5))
    with pytest.raises(LadderError):
        WalkSpec(Pareto(3.0), 1.0, Weibull(1.0))
    with pytest.raises(LadderError):
        PointMass(0.0)


def test_degenerate_walk():
    w = WalkSpec(PointMass(1.0), 0.0, PointMass(1.0))
    grid = np.array([0.5, 1.5, 2.7, 10.2, 19.9])
    est = estimate_ladder(w, 40, horizon=1000, grid=grid, batches=4)
    assert est.q == 1.0
    assert np.all(est.pih_tail == 0)
    assert np.array_equal(est.gstar, 1 + np.floor(grid))
    assert est.mean_hstar == 1.0


def brute_force_q(walk, n, steps, seed):
    """Fraction of paths that never rise strictly above 0, by direct cumulative sums."""
    rng = np.random.default_rng(seed)
    never = 0
    for _ in range(n // 1000):
        s = np.cumsum(walk.steps(rng, (1000, steps)), axis=1)
        never += int(np.sum(s.max(axis=1) <= 0))
    return never / n


def test_q_against_brute_force(calib):
    n = 20_000
    p = brute_force_q(calibration_walk(), n, 2000, seed=9)
    se_brute = math.sqrt(p * (1 - p) / n)
    se_est = (calib.q_ci[1] - calib.q_ci[0]) / (2 * stats.t.ppf(0.975, 19))
    assert abs(calib.q - p) < 3 * math.hypot(se_brute, se_est)


def test_q_against_wald_identity(calib):
    # exponential down steps make the first weak descending height exponential,
    # so |E S_1| = q E H*_1 pins q exactly
    q_exact = 0.5 / DOWN_MEAN
    assert calib.q_ci[0] <= q_exact <= calib.q_ci[1]


def test_descending_height_is_exponential(calib):
    zs = np.concatenate([b.zstar1 for b in calib.batches])
    assert stats.kstest(zs, stats.expon(scale=DOWN_MEAN).cdf).pvalue > 1e-3
    assert calib.mean_hstar_ci[0] <= DOWN_MEAN <= calib.mean_hstar_ci[1]


def test_renewal_function_is_linear_for_exponential_heights(calib):
    exact = 1 + calib.grid / DOWN_MEAN
    inside = (calib.gstar_ci[:, 0] <= exact) & (exact <= calib.gstar_ci[:, 1])
    assert inside.mean() >= 0.85
    assert np.all(np.diff(calib.gstar) >= 0)
    assert renewal_slope_check(calib)["passed"]


def test_vigon_inverse(calib):
    rows = check_vigon_inverse(calib, us=np.linspace(1, 5, 9), level=1 - 0.05 / 9)
    assert sum(r.passed for r in rows) >= 8
    rhs = [r.rhs for r in rows]
    assert all(a >= b for a, b in zip(rhs, rhs[1:]))


def test_vigon_inverse_zero_tail(calib):
    rows = check_vigon_inverse(calib, pos_tail=lambda x: np.zeros_like(np.asarray(x, dtype=float)))
    assert all(r.rhs == 0 for r in rows)


def test_vigon_direct(calib):
    us = np.linspace(1, 5, 9)
    res = check_vigon_direct(calib, us=us, level=1 - 0.05 / 9)
    assert sum(r.passed for r in res["positive"]) >= 8
    assert sum(r.passed for r in res["negative"]) >= 8
    for r, floor in zip(res["negative"], res["killing_floor"]):
        assert r.rhs >= floor


def test_out_of_grid_points_rejected(calib):
    with pytest.raises(LadderError):
        check_vigon_inverse(calib, us=[50.0])
    with pytest.raises(LadderError):
        check_vigon_direct(calib, us=[0.01])


def test_killing_and_finite_mean(calib):
    assert killing_consistency(calib)["passed"]
    fm = finite_mean_check(calib)
    assert fm["abs_mean"] == pytest.approx(0.5)
    assert fm["passed"] and fm["ci"][0] <= 0.5 <= fm["ci"][1]


def test_prop_q_rows(calib):
    rows = check_prop_q(calib, [0.5, 1.0, 3.0])
    assert math.isnan(rows[0].ratio) and math.isnan(rows[1].ratio)
    assert rows[2].a_x > 0 and rows[2].a_hstar > 0


def test_depth_diagnostics(calib):
    d = calib.diagnostics
    assert d["depth_residual_bound"] < 1e-4
    assert d["late_ladder_ok"]


def test_estimates_deterministic():
    a = estimate_ladder(calibration_walk(), 2000, seed=3)
    b = estimate_ladder(calibration_walk(), 2000, seed=3)
    assert a.q == b.q and np.array_equal(a.gstar, b.gstar)


def test_killed_subordinator_routes_agree():
    h = overshoot_killed_subordinator(Pareto(1.5), 0.2, 0.2, 20.0, 4000, seed=1)
    r = overshoot_killed_subordinator(Pareto(1.5), 0.2, 0.2, 20.0, 4000, seed=2, method="rejection")
    assert stats.ks_2samp(h.overshoot, r.overshoot).pvalue > 1e-3
    assert h.killed_before_first_jump > 0 and r.killed_before_first_jump > 0
    assert h.a_u == 20.0
    assert np.all(h.overshoot > 0) and np.all(r.overshoot > 0)


def test_killed_subordinator_passage_probability():
    # one jump suffices at tiny u: P(pass) = 1 - P(killed before the first jump)
    res = overshoot_killed_subordinator(Weibull(0.5), 1.0, 0.5, 1e-9, 1000, method="rejection")
    assert res.p_hat == pytest.approx(2 / 3, abs=0.01)
    with pytest.raises(LadderError):
        overshoot_killed_subordinator(Pareto(1.5), 0.2, 0.0, 10.0, 10)
