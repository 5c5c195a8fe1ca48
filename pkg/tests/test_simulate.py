import math

import numpy as np
import pytest
from scipy import special, stats

from levypass.model import Drift, ModelSpec, NegativeJumps, Pareto, StableSubordinator, Weibull
from levypass.simulate import (
    NoPassage,
    Passage,
    ScriptedSource,
    SimBudget,
    _Scales,
    rng_stream,
    sample_conditional,
    simulate_first_passage,
    stable_increment,
)

DRIFT_MODEL = ModelSpec(Pareto(2.5), 1.0, Drift(2.0))


def scripted(gaps, jumps, u=3.0, c=1.0, **kw):
    m = ModelSpec(Pareto(2.5), 1.0, Drift(c))
    return simulate_first_passage(m, u, source=ScriptedSource(m, gaps, jumps), **kw)


def test_scripted_single_jump():
    res = scripted([1.0], [5.0])
    assert isinstance(res, Passage)
    s = res.sample
    assert (s.tau, s.Z, s.O) == (1.0, 1.0, 1.0)


def test_scripted_two_jumps():
    res = scripted([1.0, 1.0], [2.0, 10.0])
    s = res.sample
    assert (s.tau, s.Z, s.O) == (2.0, 0.0, 7.0)
    assert math.copysign(1.0, s.Z) == 1.0


def test_scripted_snapshots_are_exact():
    res = scripted([1.0, 1.0], [2.0, 10.0], snapshots=(0.25, 0.5, 0.75, 1.0))
    # path: -t on [0,1), 1 - (t-1) on [1,2)
    assert res.sample.snapshots == ((0.25, -0.5), (0.5, -1.0), (0.75, 0.5), (1.0, 0.0))


def test_scripted_horizon_stops_without_passage():
    res = scripted([1.0, 1.0, 1.0], [2.0, 0.5, 10.0], horizon=2.5)
    assert isinstance(res, NoPassage) and res.reason == "horizon"
    assert res.running_inf == pytest.approx(-1.0)


def fine_grid_passage(gaps, jumps, c, u, horizon, dt=1e-4):
    """Brute force: evaluate the path on a time grid and test every grid value against u."""
    grid = np.arange(1, int(round(horizon / dt)) + 1) * dt
    epochs = np.cumsum(gaps)
    # each jump is registered at the first grid point at or after its epoch
    k = np.searchsorted(grid, epochs, side="left")
    keep = k < grid.size
    inc = np.zeros(grid.size)
    np.add.at(inc, k[keep], jumps[keep])
    x = np.cumsum(inc) - c * grid
    return bool(np.any(x > u))


def _drift_paths(n, seed, horizon, rate=1.0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        g = rng.standard_exponential(int(3 * rate * horizon + 60)) / rate
        while g.sum() < horizon:
            g = np.concatenate([g, rng.standard_exponential(50) / rate])
        yield g, Pareto(2.5).sample(rng, g.size)


def test_fine_grid_oracle_shared_randomness():
    u, c, horizon = 0.5, 2.0, 8.0
    agree = hits = 0
    for gaps, jumps in _drift_paths(1000, 2024, horizon):
        exact = isinstance(
            simulate_first_passage(DRIFT_MODEL, u, source=ScriptedSource(DRIFT_MODEL, gaps, jumps), horizon=horizon),
            Passage,
        )
        brute = fine_grid_passage(gaps, jumps, c, u, horizon)
        agree += exact == brute
        hits += exact
    assert agree == 1000
    assert 200 < hits < 800


def test_passage_frequency_matches_independent_oracle():
    u, c, horizon, n = 0.5, 2.0, 8.0, 3000
    oracle = np.mean([fine_grid_passage(g, j, c, u, horizon) for g, j in _drift_paths(n, 99, horizon)])
    sim = np.mean([isinstance(simulate_first_passage(DRIFT_MODEL, u, rng_stream(7, i), horizon=horizon), Passage)
                   for i in range(n)])
    se = math.sqrt(oracle * (1 - oracle) / n + sim * (1 - sim) / n)
    assert abs(sim - oracle) < 3 * se


@pytest.mark.parametrize("model", [DRIFT_MODEL, ModelSpec(Pareto(2.5), 1.0, NegativeJumps(Weibull(1.0), 2.5)),
                                   ModelSpec(Pareto(2.5), 0.2, StableSubordinator(0.5))], ids=["drift", "cp", "stable"])
def test_inclusion_monotonicity(model):
    scales = _Scales(50.0, 50.0)
    for i in range(300):
        p1 = isinstance(simulate_first_passage(model, 2.0, rng_stream(3, i), scales=scales, snapshots=()), Passage)
        p2 = isinstance(simulate_first_passage(model, 6.0, rng_stream(3, i), scales=scales, snapshots=()), Passage)
        assert p1 or not p2


@pytest.mark.parametrize("model", [DRIFT_MODEL, ModelSpec(Pareto(2.5), 1.0, NegativeJumps(Weibull(1.0), 2.5)),
                                   ModelSpec(Pareto(2.5), 3.0, StableSubordinator(0.5))], ids=["drift", "cp", "stable"])
def test_snapshot_consistency_and_positivity(model):
    got = 0
    for i in range(400):
        res = simulate_first_passage(model, 3.0, rng_stream(5, i), snapshots=(0.3, 0.6, 1.0))
        if isinstance(res, Passage):
            s = res.sample
            got += 1
            assert s.O > 0
            assert s.Z > -3.0
            assert abs(s.snapshots[-1][1] + s.Z) <= 1e-12
            assert all(math.isfinite(v) for _, v in s.snapshots)
    assert got > 10


def test_budget_exhaustion_reports_diagnostics():
    res = simulate_first_passage(DRIFT_MODEL, 1e6, rng_stream(0, 0), budget=SimBudget(t_cap=1e-6, depth_cap=1e-6))
    assert isinstance(res, NoPassage)
    assert res.reason == "budget" and res.running_inf < 0 and res.events >= 1
    res = simulate_first_passage(DRIFT_MODEL, 1e6, rng_stream(0, 0), budget=SimBudget(max_events=200))
    assert isinstance(res, NoPassage) and res.reason == "max_events"


def test_stable_increment_laplace():
    rng = np.random.default_rng(1)
    x = stable_increment(0.5, 1.0, rng, size=1_000_000)
    v = np.exp(-x)
    assert abs(v.mean() - math.exp(-1)) < 3 * v.std() / math.sqrt(x.size)
    assert np.all(x > 0)


def test_stable_increment_small_time():
    rng = np.random.default_rng(2)
    x = stable_increment(0.5, 1e-6, rng, size=10_001)
    assert np.median(x) < 1e-4
    # median of the standard 1/2-stable law is 1 / (4 erfcinv(1/2)**2)
    med = 1 / (4 * special.erfcinv(0.5) ** 2)
    assert np.median(x) == pytest.approx(1e-12 * med, rel=0.1)


def test_stable_increment_scaling_law():
    rng = np.random.default_rng(4)
    x = stable_increment(0.5, 2.0, rng, size=20000, scale=1.5)
    # Laplace exponent 1.5 * lam**0.5 over time 2: Levy law with scale (3)**2 / 2
    assert stats.kstest(x, stats.levy(scale=4.5).cdf).pvalue > 1e-3
    with pytest.raises(ValueError):
        stable_increment(0.5, 0.0, rng)


def test_rng_streams_are_reproducible_and_distinct():
    a = rng_stream(7, 3).random(5)
    assert np.array_equal(a, rng_stream(7, 3).random(5))
    assert not np.array_equal(a, rng_stream(7, 4).random(5))
    assert not np.array_equal(a, rng_stream(8, 3).random(5))


def _key(res):
    return [(s.replicate, s.tau, s.Z, s.O, s.snapshots) for s in res.samples]


def test_conditional_sampling_deterministic():
    a = sample_conditional(DRIFT_MODEL, 20.0, 300, base_seed=7)
    b = sample_conditional(DRIFT_MODEL, 20.0, 300, base_seed=7)
    assert _key(a) == _key(b)
    assert len(a.samples) == 300 and not a.shortfall
    c = sample_conditional(DRIFT_MODEL, 20.0, 300, base_seed=8)
    assert _key(a) != _key(c)


def test_conditional_sampling_independent_of_workers():
    a = sample_conditional(DRIFT_MODEL, 20.0, 200, base_seed=7, workers=1)
    b = sample_conditional(DRIFT_MODEL, 20.0, 200, base_seed=7, workers=3)
    assert _key(a) == _key(b)


def test_passage_probability_decreases_in_level():
    ps = [sample_conditional(DRIFT_MODEL, u, 400, base_seed=11).p_hat for u in (10.0, 50.0, 200.0)]
    assert ps[0] > ps[1] > ps[2] > 0


def test_rejection_route_conditional_law():
    res = sample_conditional(DRIFT_MODEL, 3.0, 400, base_seed=1, method="rejection")
    assert len(res.samples) == 400
    assert all(s.O > 0 for s in res.samples)
    assert res.p_ci[0] <= res.p_hat <= res.p_ci[1]
    assert res.acceptance_rate == pytest.approx(400 / res.replicates)


@pytest.mark.slow
def test_hazard_and_rejection_agree():
    u = 10.0
    h = sample_conditional(DRIFT_MODEL, u, 1500, base_seed=3)
    r = sample_conditional(DRIFT_MODEL, u, 1500, base_seed=4, method="rejection")
    for f in ("tau", "Z", "O"):
        a = [getattr(s, f) for s in h.samples]
        b = [getattr(s, f) for s in r.samples]
        assert stats.ks_2samp(a, b).pvalue > 1e-3, f
    se = math.hypot(h.p_ci[1] - h.p_hat, r.p_ci[1] - r.p_hat) / 1.96
    assert abs(h.p_hat - r.p_hat) < 3.5 * se


@pytest.mark.slow
def test_normalised_overshoot_mean_case_i():
    # E min(U, K) for P(U > x) = (1+x)**-1.5 has a closed form; the truncation keeps the variance finite
    u, k = 200.0, 20.0
    res = sample_conditional(DRIFT_MODEL, u, 3000, base_seed=5)
    x = np.minimum([s.O / u for s in res.samples], k)
    exact = 2.0 * (1 - (1 + k) ** -0.5)
    assert abs(x.mean() - exact) < 3.5 * x.std() / math.sqrt(x.size) + 0.02


def test_invalid_requests():
    with pytest.raises(ValueError):
        sample_conditional(DRIFT_MODEL, 5.0, 0)
    with pytest.raises(ValueError):
        sample_conditional(DRIFT_MODEL, 5.0, 10, method="bogus")
    with pytest.raises(ValueError):
        simulate_first_passage(DRIFT_MODEL, -1.0)
    with pytest.raises(ValueError):
        ScriptedSource(ModelSpec(Pareto(2.5), 0.2, StableSubordinator(0.5)), [1.0], [1.0])
