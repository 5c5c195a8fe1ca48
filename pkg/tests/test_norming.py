import math

import pytest

from levypass.model import Drift, Lognormal, ModelSpec, NegativeJumps, Pareto, StableSubordinator, Weibull
from levypass.norming import (
    NormingError,
    auxiliary_a,
    growth_c,
    inverse_b,
    norming_bundle,
    passage_time_ratio,
    r_of_u,
    solve_growth,
)


def test_pareto_space_norming_is_identity():
    m = ModelSpec(Pareto(2.5), 1.0, Drift(2.0))
    assert auxiliary_a(m, 200.0) == 200.0


def test_weibull_space_norming_closed_form():
    m = ModelSpec(Weibull(0.5), 1.0, Drift(3.0))
    assert auxiliary_a(m, 1e4) == pytest.approx(202.0, rel=1e-12)


def test_finite_mean_time_norming():
    m = ModelSpec(Pareto(2.5), 1.0, Drift(2.0))
    mu = 2 - 1 / 1.5
    assert growth_c(m, 3.0) == pytest.approx(3 * mu)
    assert r_of_u(m, 20.0) == pytest.approx(20 / mu)
    assert inverse_b(m, growth_c(m, 7.0)) == pytest.approx(7.0)


def test_stable_time_norming():
    m = ModelSpec(Pareto(2.5), 0.2, StableSubordinator(0.5))
    assert growth_c(m, 4.0) == pytest.approx(16.0)
    assert r_of_u(m, 1e4) == pytest.approx(100.0)
    with pytest.raises(ValueError):
        passage_time_ratio(ModelSpec(Pareto(2.5), 1.0, Drift(2.0)), 10.0)
    # with a pure stable negative side the ratio is exactly 1 at index 1/2
    assert passage_time_ratio(m, 1e4) == pytest.approx(1.0, rel=1e-12)


def test_infinite_mean_growth_root():
    # negative Pareto(0.9) steps: c solves c = t * A(c) with A the truncated mean
    m = ModelSpec(Pareto(2.5), 0.1, NegativeJumps(Pareto(0.9), 1.0))
    for t in (10.0, 1e3, 1e5):
        c = growth_c(m, t)
        a = 1.0 * Pareto(0.9).survival_integral(1.0, c)
        assert c == pytest.approx(t * a, rel=1e-10)
        assert inverse_b(m, c) == pytest.approx(t, rel=1e-10)


def test_growth_root_selects_increasing_branch():
    f = lambda c: math.log(c)  # noqa: E731
    c1, c2 = solve_growth(10.0, f), solve_growth(20.0, f)
    assert c2 > c1
    assert c1 == pytest.approx(10 * math.log(c1), rel=1e-12)
    with pytest.raises(NormingError):
        solve_growth(1.0, f)


def test_bundle_and_errors():
    m = ModelSpec(Lognormal(0.0, 1.0), 1.0, Drift(3.0))
    b = norming_bundle(m)
    assert b.regime.case == "ii"
    assert b.a(100.0) == pytest.approx(auxiliary_a(m, 100.0))
    with pytest.raises(ValueError):
        auxiliary_a(m, 0.0)
    with pytest.raises(ValueError):
        growth_c(m, -1.0)


def test_lognormal_norming_asymptotics():
    # mean excess of a lognormal grows like u * spread**2 / log u
    m = ModelSpec(Lognormal(0.0, 1.0), 1.0, Drift(3.0))
    u = 1e8
    assert auxiliary_a(m, u) / (u / math.log(u)) == pytest.approx(1.0, rel=0.15)
