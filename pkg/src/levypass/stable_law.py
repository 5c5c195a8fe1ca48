"""Density of the standard one-sided stable subordinator and its bridges.

The subordinator ``D`` of index ``alpha`` in (0,1) has Laplace transform
``E exp(-lam D_t) = exp(-t lam**alpha)``; ``h_t`` is the density of ``D_t``.

``h_1`` is evaluated by the convergent power series in ``x**(-alpha)`` when
that series is numerically benign, and otherwise by the Kanter integral

    h_1(x) = alpha/(1-alpha) * x**(-1/(1-alpha)) / pi
             * int_0^pi K(phi) exp(-K(phi) x**(-alpha/(1-alpha))) dphi

whose integrand is positive (no cancellation).  The switch point is
calibrated once per index.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammaln


class SeriesError(ArithmeticError):
    """The power series failed to converge within the term cap."""


TERM_CAP = 400
_CANCEL_LIMIT = 1e3


@dataclass(frozen=True)
class StableIndex:
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("stable index must lie in (0, 1)")

    @property
    def gamma(self) -> float:
        return 1.0 - self.alpha


@dataclass(frozen=True)
class BridgeQuery:
    t: float
    z: float
    times: tuple
    values: tuple

    def __post_init__(self):
        s, y = list(self.times), list(self.values)
        if not (self.t > 0 and self.z > 0):
            raise ValueError("bridge horizon and endpoint must be positive")
        if len(s) != len(y) or not s:
            raise ValueError("times and values must be non-empty and of equal length")
        if not all(a < b for a, b in zip([0.0] + s, s + [1.0])):
            raise ValueError("times must satisfy 0 < s_1 < ... < s_k < 1")
        if not all(a < b for a, b in zip([0.0] + y, y + [self.z])):
            raise ValueError("values must satisfy 0 < y_1 < ... < y_k < z")


def _index(idx) -> float:
    return idx.alpha if isinstance(idx, StableIndex) else float(idx)


# ---------------------------------------------------------------------------
# series branch


def _series(alpha: float, x: np.ndarray, density: bool = True):
    """Partial sums of the large-x series with Neumaier compensation.

    Returns (value, sum of absolute terms, converged flag per point).
    For ``density=False`` the series is that of the survival function.
    """
    lx = np.log(x)
    total = np.zeros_like(x)
    comp = np.zeros_like(x)
    abs_total = np.zeros_like(x)
    converged = np.zeros(x.shape, dtype=bool)
    for k in range(1, TERM_CAP + 1):
        s = math.sin(k * math.pi * alpha)
        if density:
            logmag = gammaln(k * alpha + 1) - gammaln(k + 1) - (k * alpha + 1) * lx
        else:
            logmag = gammaln(k * alpha) - gammaln(k + 1) - k * alpha * lx
        mag = np.exp(logmag) * abs(s)
        term = (1.0 if k % 2 else -1.0) * math.copysign(1.0, s) * mag
        tmp = total + term
        comp += np.where(np.abs(total) >= np.abs(term), (total - tmp) + term, (term - tmp) + total)
        total = tmp
        abs_total += mag
        # magnitude envelope ignoring the sine factor decides convergence
        env = np.exp(logmag)
        converged |= (k > 2) & (env <= 1e-17 * np.abs(total + comp))
        if converged.all():
            break
    return (total + comp) / math.pi, abs_total / math.pi, converged


# ---------------------------------------------------------------------------
# Kanter integral branch


def _log_kanter(alpha: float, phi: float) -> float:
    a = alpha
    return (math.log(math.sin(a * phi)) - math.log(math.sin(phi))) / (1.0 - a) + math.log(
        math.sin((1.0 - a) * phi)
    ) - math.log(math.sin(a * phi))


def _kanter_density(alpha: float, x: float) -> float:
    a = alpha
    lw = -a / (1.0 - a) * math.log(x)
    lpre = math.log(a / (1.0 - a)) - math.log(x) / (1.0 - a)
    if _negligible(a, lw, lpre):
        return 0.0
    w = math.exp(lw)

    def f(phi):
        lk = _log_kanter(a, phi)
        k = math.exp(lk)
        return math.exp(lpre + lk - k * w)

    lo = 1e-300
    hi = math.pi * (1 - 1e-15)
    # the mass sits where K(phi) * w is O(1); give quad a breakpoint there
    val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400, points=_peak_points(a, w))
    return val / math.pi


def _kanter_cdf(alpha: float, x: float) -> float:
    a = alpha
    lw = -a / (1.0 - a) * math.log(x)
    if _negligible(a, lw, 0.0):
        return 0.0
    w = math.exp(lw)

    def f(phi):
        return math.exp(-math.exp(_log_kanter(a, phi)) * w)

    val, _ = integrate.quad(f, 1e-300, math.pi * (1 - 1e-15), epsabs=0.0, epsrel=1e-13, limit=400,
                            points=_peak_points(a, w))
    return val / math.pi


def _negligible(alpha: float, lw: float, lpre: float) -> bool:
    # the integrand never exceeds exp(lpre + log K - K w) <= exp(lpre - K0 w) up to a factor
    lk0 = _log_kanter(alpha, 1e-8)
    return lw + lk0 > 7.0 and (lw + lk0 > 700.0 or math.exp(lw + lk0) - lpre > 800.0)


def _peak_points(alpha: float, w: float):
    # K is increasing from K(0+) to infinity; find phi where K*w ~ 1 and a bit beyond
    k0 = math.exp(_log_kanter(alpha, 1e-8))
    pts = []
    for target in (1.0, 30.0):
        lev = target / w
        if lev <= k0:
            continue
        lo, hi = 1e-8, math.pi * (1 - 1e-12)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if math.exp(_log_kanter(alpha, mid)) < lev:
                lo = mid
            else:
                hi = mid
        pts.append(0.5 * (lo + hi))
    return pts or None


# ---------------------------------------------------------------------------
# calibration of the switch point

_calib_lock = threading.Lock()


@lru_cache(maxsize=None)
def _switch_point_cached(alpha: float) -> float:
    x = 1e4
    while x > 1e-6:
        nxt = x / 1.1
        v, av, conv = _series(alpha, np.array([nxt]))
        if not (conv[0] and v[0] > 0 and av[0] <= _CANCEL_LIMIT * abs(v[0])):
            return x
        x = nxt
    return x


def switch_point(idx) -> float:
    """Smallest argument at which the series branch is used for this index."""
    with _calib_lock:
        return _switch_point_cached(_index(idx))


def h1(idx, x):
    """Density of the stable law at time 1."""
    alpha = _index(idx)
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape)
    pos = x > 0
    if not pos.any():
        return float(out[0]) if scalar else out
    x0 = switch_point(alpha)
    big = pos & (x >= x0)
    if big.any():
        v, _, conv = _series(alpha, x[big])
        if not conv.all():
            raise SeriesError(f"series did not converge within {TERM_CAP} terms")
        out[big] = v
    small = pos & (x < x0)
    for i in zip(*np.nonzero(small)):
        out[i] = _kanter_density(alpha, float(x[i]))
    return float(out[0]) if scalar else out


def cdf1(idx, x):
    """Distribution function of the stable law at time 1."""
    alpha = _index(idx)
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape)
    pos = x > 0
    x0 = switch_point(alpha)
    big = pos & (x >= x0)
    if big.any():
        v, _, conv = _series(alpha, x[big], density=False)
        if not conv.all():
            raise SeriesError(f"series did not converge within {TERM_CAP} terms")
        out[big] = 1.0 - v
    small = pos & (x < x0)
    for i in zip(*np.nonzero(small)):
        out[i] = _kanter_cdf(alpha, float(x[i]))
    return float(out[0]) if scalar else out


def density_h(idx, t, z):
    """``h_t(z) = h_1(z / t**(1/alpha)) / t**(1/alpha)``; zero for ``z <= 0``."""
    alpha = _index(idx)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    z = np.asarray(z, dtype=float)
    sc = t ** (1.0 / alpha)
    return h1(alpha, z / sc) / sc


def cdf_h(idx, t, z):
    alpha = _index(idx)
    return cdf1(alpha, np.asarray(z, dtype=float) / np.asarray(t, dtype=float) ** (1.0 / alpha))


def half_stable_density(x):
    """Closed-form density for index 1/2."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0, np.exp(-1.0 / (4.0 * x)) / (2.0 * math.sqrt(math.pi) * x**1.5), 0.0)
    return out if out.ndim else float(out)


def expect_h1(idx, fn, epsrel: float = 1e-11) -> float:
    """``int_0^inf fn(z) h_1(z) dz`` by adaptive quadrature in log scale."""
    alpha = _index(idx)

    def integrand(y):
        z = math.exp(y)
        return fn(z) * h1(alpha, z) * z

    total = 0.0
    edges = [-60.0, -5.0, -2.0, 0.0, 2.0, 5.0, 15.0, 40.0, min(80.0 / alpha, 700.0)]
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-15, epsrel=epsrel, limit=200)
        total += val
    return total


@lru_cache(maxsize=16)
def _log_grid(alpha: float, step: float = 0.01):
    # below y_lo the density is under exp(-750); above y_hi the tail mass is negligible
    k0 = math.exp(_log_kanter(alpha, 1e-8))
    y_lo = -(1.0 - alpha) / alpha * math.log(750.0 / k0)
    y = np.arange(y_lo, min(80.0 / alpha, 700.0), step)
    z = np.exp(y)
    w = h1(alpha, z) * z * step
    w[0] *= 0.5
    w[-1] *= 0.5
    return z, w


def expect_h1_grid(idx, fn) -> float:
    """Trapezoid version of :func:`expect_h1` on a cached log grid; ``fn`` must be vectorised."""
    z, w = _log_grid(_index(idx))
    return float(np.dot(fn(z), w))


def occupation_integral(idx, z: float) -> float:
    """``int_0^inf h_t(z) dt = z**(-gamma) / Gamma(alpha)``."""
    alpha = _index(idx)
    if not z > 0:
        raise ValueError("z must be positive")
    return z ** (alpha - 1.0) / math.gamma(alpha)


def occupation_integral_quad(idx, z: float) -> float:
    """Numerical ``int_0^inf h_t(z) dt`` via the substitution ``x = z / t**(1/alpha)``."""
    alpha = _index(idx)
    # dt h_t(z) = alpha * z**(alpha-1) * x**(-alpha) h_1(x) dx
    return alpha * z ** (alpha - 1.0) * expect_h1(alpha, lambda x: x ** (-alpha))


def bridge_fdd(q: BridgeQuery, idx) -> float:
    """Joint density of the bridge from 0 to ``q.z`` over ``[0, q.t]`` at the given times."""
    alpha = _index(idx)
    s = [0.0] + list(q.times)
    y = [0.0] + list(q.values)
    num = 1.0
    for r in range(1, len(s)):
        num *= density_h(alpha, q.t * (s[r] - s[r - 1]), y[r] - y[r - 1])
    num *= density_h(alpha, q.t * (1.0 - s[-1]), q.z - y[-1])
    den = density_h(alpha, q.t, q.z)
    return float(num / den)


# ---------------------------------------------------------------------------
# tabulated log-density and distribution function for bulk use


class _Table:
    """Cubic interpolants of log h_1, log F_1 and log(1-F_1) on a log grid."""

    def __init__(self, alpha: float, step: float = 0.005):
        from scipy.interpolate import CubicSpline

        self.alpha = alpha
        k0 = math.exp(_log_kanter(alpha, 1e-8))
        self.y_lo = -(1.0 - alpha) / alpha * math.log(700.0 / k0)
        self.y_hi = math.log(max(switch_point(alpha), 1.0)) + 12.0
        y = np.arange(self.y_lo, self.y_hi + step, step)
        x = np.exp(y)
        h = h1(alpha, x)
        f = cdf1(alpha, x)
        keep = (h > 0) & (f > 0)
        y, x, h, f = y[keep], x[keep], h[keep], f[keep]
        self.y_lo = float(y[0])
        self.y = y
        self.logh = CubicSpline(y, np.log(h))
        self.logf = CubicSpline(y, np.log(f))
        surv = 1.0 - f
        big = x >= switch_point(alpha)
        if big.any():
            sv, _, _ = _series(alpha, x[big], density=False)
            surv[big] = sv
        self.logs = CubicSpline(y, np.log(surv))
        lf, ls = np.log(f), np.log(surv)
        # inverse maps, split at the median so each is well conditioned
        lo = f <= 0.5
        self.inv_lower = CubicSpline(lf[lo], y[lo])
        self.inv_upper = CubicSpline(-ls[~lo], y[~lo])
        self.logf_max_lower = float(lf[lo][-1])
        from scipy.optimize import minimize_scalar

        j = int(np.argmax(h))
        res = minimize_scalar(lambda v: -float(self.logh(v)), bracket=(y[j - 1], y[j], y[j + 1]), tol=1e-12)
        self.mode = float(math.exp(res.x))


_table_lock = threading.Lock()
_tables: dict = {}


def table(idx) -> _Table:
    alpha = _index(idx)
    with _table_lock:
        t = _tables.get(alpha)
        if t is None:
            t = _tables[alpha] = _Table(alpha)
    return t


def log_h1_fast(idx, x):
    """log h_1 from the cached table; series beyond the table, -inf below it."""
    tb = table(idx)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.full(x.shape, -np.inf)
    pos = x > 0
    y = np.full(x.shape, -np.inf)
    y[pos] = np.log(x[pos])
    mid = pos & (y >= tb.y_lo) & (y <= tb.y[-1])
    out[mid] = tb.logh(y[mid])
    hi = pos & (y > tb.y[-1])
    if hi.any():
        out[hi] = np.log(_series(tb.alpha, x[hi])[0])
    return out


def log_cdf1_fast(idx, x):
    tb = table(idx)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.full(x.shape, -np.inf)
    pos = x > 0
    y = np.full(x.shape, -np.inf)
    y[pos] = np.log(x[pos])
    mid = pos & (y >= tb.y_lo) & (y <= tb.y[-1])
    out[mid] = tb.logf(y[mid])
    hi = pos & (y > tb.y[-1])
    if hi.any():
        out[hi] = np.log1p(-_series(tb.alpha, x[hi], density=False)[0])
    return out


def ppf1_fast(idx, p):
    """Quantile function of h_1 from the cached table (p in (0,1))."""
    tb = table(idx)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    lp = np.log(p)
    out = np.empty(p.shape)
    lo = lp <= tb.logf_max_lower
    out[lo] = np.exp(tb.inv_lower(np.maximum(lp[lo], tb.logf(tb.y_lo))))
    ls = np.log1p(-p[~lo])
    lim = float(tb.logs(tb.y[-1]))
    up = np.exp(tb.inv_upper(-np.maximum(ls, lim)))
    # beyond the table use the leading survival term x**(-alpha)/Gamma(1-alpha)
    far = ls < lim
    if far.any():
        up[far] = (np.exp(ls[far]) * math.gamma(1.0 - tb.alpha)) ** (-1.0 / tb.alpha)
    out[~lo] = up
    return out


def sample_bridge(idx, duration: float, total: float, frac: float, rng: np.random.Generator,
                  max_tries: int = 10_000) -> float:
    """Draw ``D(frac*duration)`` for a stable subordinator with ``D(duration) = total``.

    The bridge density ``h_a(y) h_b(total-y) / h_L(total)`` is sampled by
    rejection from a piecewise-constant envelope.  Each h is unimodal, so on
    a cell its supremum sits at the cell point closest to the mode; the
    envelope is therefore a true upper bound and the draw is exact up to the
    accuracy of the tabulated density.
    """
    alpha = _index(idx)
    if not (0 < frac < 1 and duration > 0 and total > 0):
        raise ValueError("bridge needs 0<frac<1, positive duration and total")
    mode = table(alpha).mode
    sa = (frac * duration) ** (1.0 / alpha)
    sb = ((1.0 - frac) * duration) ** (1.0 / alpha)

    def log_ha(y):
        return log_h1_fast(alpha, y / sa) - math.log(sa)

    def log_hb(y):
        return log_h1_fast(alpha, y / sb) - math.log(sb)

    ends = np.geomspace(1e-13, 0.5, 160)
    mid = np.linspace(0.0, 1.0, 161)
    e = np.unique(np.concatenate([[0.0], ends, 1.0 - ends, mid, [1.0]]))
    e = total * e[(e >= 0) & (e <= 1)]
    lo, hi = e[:-1], e[1:]
    ya = np.clip(mode * sa, lo, hi)
    yb = total - np.clip(mode * sb, total - hi, total - lo)
    log_env = log_ha(ya) + log_hb(total - yb)
    width = hi - lo
    ok = np.isfinite(log_env) & (width > 0)
    if not ok.any():
        raise RuntimeError("bridge envelope vanished")
    lw = np.where(ok, log_env + np.log(np.where(width > 0, width, 1.0)), -np.inf)
    w = np.exp(lw - lw.max())
    cum = np.cumsum(w)
    cum /= cum[-1]
    for _ in range(max_tries):
        j = int(np.searchsorted(cum, rng.random(), side="right"))
        j = min(j, len(lo) - 1)
        y = lo[j] + width[j] * rng.random()
        if not 0 < y < total:
            continue
        lp = float(log_ha(y)[0] + log_hb(total - y)[0])
        if math.log(rng.random()) < lp - log_env[j]:
            return float(y)
    raise RuntimeError("stable bridge sampler exceeded its retry cap")
