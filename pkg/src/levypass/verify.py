"""Distances between normalised samples and limit laws: KS, Wasserstein-1,
binned local-density comparisons, and stratified conditional-overshoot tests."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats


class VerifyError(ValueError):
    """Empty input, bad windows, or a mismatched law."""


def ecdf(samples) -> Callable:
    """Right-continuous empirical CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise VerifyError("ecdf of an empty sample")

    def F(t):
        return np.searchsorted(x, t, side="right") / x.size

    return F


def ks_distance(samples, cdf: Callable) -> float:
    """Exact two-sided sup distance between the empirical CDF and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise VerifyError("KS distance of an empty sample")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    return float(max(d_plus, d_minus, 0.0))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def wasserstein1(samples, quantile: Callable, tol: float = 1e-6) -> float:
    """``int_0^1 |F_n^{-1}(p) - Q(p)| dp`` with Gauss-Legendre on each step of the empirical quantile.

    The two end cells, where ``Q`` may be unbounded, use adaptive quadrature.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise VerifyError("Wasserstein distance of an empty sample")
    lo = np.arange(n) / n
    half = 0.5 / n
    p = lo[:, None] + half * (1.0 + _GL_X[None, :])
    q = np.asarray(quantile(p.ravel()), dtype=float).reshape(p.shape)
    cells = half * np.sum(_GL_W[None, :] * np.abs(x[:, None] - q), axis=1)
    for j in {0, n - 1}:
        cells[j] = integrate.quad(lambda s: abs(x[j] - float(quantile(s))), j / n, (j + 1) / n,
                                  epsabs=tol / 2, limit=200)[0]
    return float(np.sum(cells))


def dkw_epsilon(n: int, alpha: float = 0.05) -> float:
    """Radius with ``P(KS > eps) <= alpha`` for continuous targets."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


@dataclass(frozen=True)
class EcdfReport:
    n: int
    ks: float
    wasserstein: float | None
    quantiles: tuple
    law: str
    normalization: dict = field(default_factory=dict)


def ecdf_report(samples, cdf: Callable, law: str, quantile: Callable | None = None,
                normalization: dict | None = None, probs=(0.1, 0.25, 0.5, 0.75, 0.9)) -> EcdfReport:
    x = np.asarray(samples, dtype=float)
    emp = np.quantile(x, probs)
    tgt = [float(quantile(p)) for p in probs] if quantile is not None else [math.nan] * len(probs)
    table = tuple((float(p), float(e), t) for p, e, t in zip(probs, emp, tgt))
    w = wasserstein1(x, quantile) if quantile is not None else None
    return EcdfReport(int(x.size), ks_distance(x, cdf), w, table, law, dict(normalization or {}))


# ---------------------------------------------------------------------------
# local densities


@dataclass(frozen=True)
class LocalBin:
    lower: tuple
    upper: tuple
    count: int
    empirical: float
    target: float
    ci: tuple
    rel_error: float
    passed: bool


@dataclass(frozen=True)
class LocalCheck:
    bins: tuple
    n: int
    windows: tuple
    insufficient: int
    pass_fraction: float

    @property
    def occupied(self) -> int:
        return len(self.bins)


def _poisson_ci(k: int, level: float):
    a = 1.0 - level
    lo = 0.0 if k == 0 else stats.chi2.ppf(a / 2, 2 * k) / 2
    hi = stats.chi2.ppf(1 - a / 2, 2 * k + 2) / 2
    return lo, hi


def _box_mean(target: Callable, lower, upper, nodes: int) -> float:
    x, w = np.polynomial.legendre.leggauss(nodes)
    d = len(lower)
    tot = 0.0
    for idx in itertools.product(range(nodes), repeat=d):
        pt = [0.5 * (lower[k] + upper[k]) + 0.5 * (upper[k] - lower[k]) * x[idx[k]] for k in range(d)]
        tot += float(np.prod([w[i] for i in idx])) * float(target(*pt))
    return tot / 2.0**d


def local_density_check(points, target: Callable | None, windows, bins_per_dim=8, min_count: int = 30,
                        level: float = 0.95, nodes: int = 3, box_average: Callable | None = None) -> LocalCheck:
    """Binned density of ``points`` (shape ``(n, d)``) against ``target(*coords)``.

    Bins are equal-width on each window.  Along the last axis, adjacent bins
    are merged until each holds ``min_count`` points; rows that cannot reach
    it are reported as insufficient, never as zeros.  The target is averaged
    over each bin by a tensor Gauss-Legendre rule and compared with an exact
    Poisson interval for the count.  ``box_average(lower, upper)``, when
    given, replaces the tensor rule for targets that need a dedicated one.
    """
    if target is None and box_average is None:
        raise VerifyError("either target or box_average is required")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, d = pts.shape
    windows = tuple(tuple(map(float, w)) for w in windows)
    if len(windows) != d:
        raise VerifyError("one window per coordinate is required")
    for lo, hi in windows:
        if not (0 <= lo < hi):
            raise VerifyError(f"bad window {(lo, hi)}")
    nb = (bins_per_dim,) * d if np.isscalar(bins_per_dim) else tuple(bins_per_dim)
    edges = [np.linspace(lo, hi, k + 1) for (lo, hi), k in zip(windows, nb)]
    counts, _ = np.histogramdd(pts, bins=edges)
    out = []
    insufficient = 0
    for head in itertools.product(*[range(k) for k in nb[:-1]]):
        row = counts[head]
        groups, cur, acc = [], [], 0
        for j in range(nb[-1]):
            cur.append(j)
            acc += row[j]
            if acc >= min_count:
                groups.append(cur)
                cur, acc = [], 0
        if cur:
            if groups:
                groups[-1].extend(cur)
            else:
                insufficient += 1
                continue
        for g in groups:
            lower = tuple(float(edges[k][head[k]]) for k in range(d - 1)) + (float(edges[-1][g[0]]),)
            upper = tuple(float(edges[k][head[k] + 1]) for k in range(d - 1)) + (float(edges[-1][g[-1] + 1]),)
            vol = float(np.prod(np.subtract(upper, lower)))
            k = int(sum(row[j] for j in g))
            lo, hi = _poisson_ci(k, level)
            emp = k / (n * vol)
            if box_average is not None:
                tgt = float(box_average(lower, upper))
            else:
                tgt = _box_mean(target, lower, upper, nodes)
            ci = (lo / (n * vol), hi / (n * vol))
            rel = emp / tgt - 1.0 if tgt > 0 else math.inf
            out.append(LocalBin(lower, upper, k, emp, tgt, ci, rel, bool(ci[0] <= tgt <= ci[1])))
    frac = sum(b.passed for b in out) / len(out) if out else math.nan
    return LocalCheck(tuple(out), n, windows, insufficient, frac)


# ---------------------------------------------------------------------------
# conditional overshoot


def conditional_overshoot_cdf(case: str, beta: float | None, z, x):
    """Limit of ``P(O <= x | Z = z)`` after normalisation by ``a(u)``."""
    x = np.asarray(x, dtype=float)
    if case == "ii":
        return -np.expm1(-np.maximum(x, 0.0))
    if case == "i":
        if beta is None or beta <= 0:
            raise VerifyError("Case i needs a positive tail index")
        z = np.asarray(z, dtype=float)
        return 1.0 - ((1.0 + z) / (1.0 + z + np.maximum(x, 0.0))) ** beta
    raise VerifyError(f"unknown case {case!r}")


@dataclass(frozen=True)
class StratumResult:
    z_range: tuple
    n: int
    ks: float
    critical: float
    passed: bool


@dataclass(frozen=True)
class ConditionalReport:
    strata: tuple
    level: float
    passed: bool
    between_pvalue: float | None


def conditional_overshoot_check(z, o, case: str, beta: float | None = None, strata: int = 5,
                                level: float = 0.95) -> ConditionalReport:
    """KS of the overshoot within equal-count strata of the undershoot.

    Each stratum is compared with the average of the conditional limit CDF
    over the stratum's own ``z`` values.  Strata share a Bonferroni-corrected
    critical value so ``level`` is the family-wise level.  For Case ii a
    two-sample KS between the lowest and highest strata is also reported.
    """
    z = np.asarray(z, dtype=float)
    o = np.asarray(o, dtype=float)
    if z.shape != o.shape or z.size == 0:
        raise VerifyError("z and o must be non-empty and aligned")
    strata = max(1, min(strata, z.size // 30 or 1))
    order = np.argsort(z, kind="stable")
    parts = np.array_split(order, strata)
    alpha = (1.0 - level) / strata
    rows = []
    for idx in parts:
        zz, oo = z[idx], o[idx]
        if case == "i":
            def cdf(x, zz=zz):
                return np.mean(conditional_overshoot_cdf(case, beta, zz[None, :], np.asarray(x)[:, None]), axis=1)
        else:
            def cdf(x):
                return conditional_overshoot_cdf(case, beta, 0.0, x)
        d = ks_distance(oo, cdf)
        crit = float(stats.kstwo.ppf(1.0 - alpha, idx.size))
        rows.append(StratumResult((float(zz.min()), float(zz.max())), int(idx.size), d, crit, d <= crit))
    between = None
    if case == "ii" and strata > 1:
        between = float(stats.ks_2samp(o[parts[0]], o[parts[-1]]).pvalue)
    return ConditionalReport(tuple(rows), level, all(r.passed for r in rows), between)


# ---------------------------------------------------------------------------
# convergence across levels


@dataclass(frozen=True)
class ConvergenceRow:
    u: float
    n: int
    distances: dict


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple
    trend: dict | None
    headline: bool


def convergence_report(levels, laws: dict, runner: Callable, tolerances: dict | None = None) -> ConvergenceReport:
    """KS distances of each normalised quantity at each level.

    ``runner(u)`` returns a mapping from quantity name to normalised samples;
    ``laws`` maps the same names to target CDFs.  ``trend`` says, per
    quantity, whether the distance at the largest level is below the one at
    the smallest; it is ``None`` for a single level.
    """
    levels = sorted(float(u) for u in levels)
    if not levels:
        raise VerifyError("at least one level is required")
    rows = []
    for u in levels:
        data = runner(u)
        missing = set(laws) - set(data)
        if missing:
            raise VerifyError(f"runner did not return {sorted(missing)}")
        dist = {k: ks_distance(data[k], laws[k]) for k in sorted(laws)}
        rows.append(ConvergenceRow(u, int(len(next(iter(data.values())))), dist))
    trend = None
    if len(rows) > 1:
        trend = {k: rows[-1].distances[k] <= rows[0].distances[k] for k in sorted(laws)}
    tol = tolerances or {}
    headline = all(rows[-1].distances[k] <= tol.get(k, math.inf) for k in laws)
    return ConvergenceReport(tuple(rows), trend, headline)


__all__ = [
    "ConditionalReport",
    "ConvergenceReport",
    "ConvergenceRow",
    "EcdfReport",
    "LocalBin",
    "LocalCheck",
    "StratumResult",
    "VerifyError",
    "conditional_overshoot_cdf",
    "conditional_overshoot_check",
    "convergence_report",
    "dkw_epsilon",
    "ecdf",
    "ecdf_report",
    "ks_distance",
    "local_density_check",
    "wasserstein1",
]
