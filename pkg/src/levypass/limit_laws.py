"""Closed-form limit laws for normalised passage quantities.

Notation: ``V`` is the limit of the normalised undershoot, ``U`` of the
normalised overshoot and ``W`` of the normalised passage time.  Case ``"i"``
means regularly varying positive tails with index ``-beta``; case ``"ii"``
means the Gumbel domain.  ``gamma`` is the regular-variation index of the
truncated negative mean; ``gamma = 0`` is the relatively stable regime and
``gamma`` in (0,1) brings in the stable subordinator of index ``1 - gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.interpolate import PchipInterpolator

from . import stable_law


def _case(case: str) -> str:
    c = str(case).lower().replace("case-", "").replace("case", "").strip()
    if c not in ("i", "ii"):
        raise ValueError(f"unknown case {case!r}")
    return c


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


# ---------------------------------------------------------------------------
# overshoot of a killed subordinator


def overshoot_pdf(case: str, alpha: float | None = None, x=0.0):
    x = np.asarray(x, dtype=float)
    if _case(case) == "i":
        if not (alpha and alpha > 0):
            raise ValueError("case i needs alpha > 0")
        v = np.where(x >= 0, alpha * (1.0 + np.maximum(x, 0)) ** (-1.0 - alpha), 0.0)
    else:
        v = np.where(x >= 0, np.exp(-np.maximum(x, 0)), 0.0)
    return _out(v)


def overshoot_cdf(case: str, alpha: float | None = None, x=0.0):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    if _case(case) == "i":
        if not (alpha and alpha > 0):
            raise ValueError("case i needs alpha > 0")
        v = -np.expm1(-alpha * np.log1p(x))
    else:
        v = -np.expm1(-x)
    return _out(v)


# ---------------------------------------------------------------------------
# gamma = 0: passage time, undershoot and overshoot


def passage_local_gamma0(case: str, beta: float | None = None, t=0.0):
    """Limit density of the passage time scaled by r(u) when gamma = 0."""
    t = np.asarray(t, dtype=float)
    if _case(case) == "i":
        _need(beta is not None and beta > 1, "case i needs beta > 1")
        v = np.where(t >= 0, (beta - 1.0) * (1.0 + np.maximum(t, 0)) ** (-beta), 0.0)
    else:
        v = np.where(t >= 0, np.exp(-np.maximum(t, 0)), 0.0)
    return _out(v)


def passage_cdf_gamma0(case: str, beta: float | None = None, t=0.0):
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    if _case(case) == "i":
        _need(beta is not None and beta > 1, "case i needs beta > 1")
        v = -np.expm1(-(beta - 1.0) * np.log1p(t))
    else:
        v = -np.expm1(-t)
    return _out(v)


def joint_vu_gamma0(case: str, beta: float | None = None, z=0.0, x=0.0):
    """Joint limit density of (V, U) when gamma = 0."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    inside = (z >= 0) & (x >= 0)
    zc, xc = np.maximum(z, 0), np.maximum(x, 0)
    if _case(case) == "i":
        _need(beta is not None and beta > 1, "case i needs beta > 1")
        v = beta * (beta - 1.0) * (1.0 + zc + xc) ** (-beta - 1.0)
    else:
        v = np.exp(-zc - xc)
    return _out(np.where(inside, v, 0.0))


def v_marginal_gamma0_cdf(case: str, beta: float | None = None, z=0.0):
    """CDF of V when gamma = 0; W has the same law."""
    return passage_cdf_gamma0(case, beta, z)


def u_marginal_gamma0_pdf(case: str, beta: float | None = None, x=0.0):
    return passage_local_gamma0(case, beta, x)


# ---------------------------------------------------------------------------
# gamma in (0,1)


def undershoot_f(case: str, beta: float | None, gamma: float, z):
    """Undershoot factor f(z) multiplying h_t(z) in the joint limit."""
    z = np.asarray(z, dtype=float)
    if _case(case) == "i":
        _need(beta is not None and beta + gamma - 1 > 0, "case i needs beta + gamma > 1")
        c = math.exp(special.gammaln(beta) - special.gammaln(beta + gamma - 1.0))
        v = c * (1.0 + np.maximum(z, 0)) ** (-beta)
    else:
        v = np.exp(-np.maximum(z, 0))
    return _out(np.where(z >= 0, v, 0.0))


def joint_vuw(case: str, beta: float | None, gamma: float, z, x, t):
    """Joint limit density of (V, U, W) for gamma in (0,1)."""
    _check_gamma(gamma)
    alpha = 1.0 - gamma
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    h = stable_law.density_h(alpha, t, z)
    xc = np.maximum(x, 0)
    zc = np.maximum(z, 0)
    if _case(case) == "i":
        _need(beta is not None and beta + gamma - 1 > 0, "case i needs beta + gamma > 1")
        c = math.exp(special.gammaln(beta + 1.0) - special.gammaln(beta + gamma - 1.0))
        k = c * (1.0 + zc + xc) ** (-beta - 1.0)
    else:
        k = np.exp(-zc - xc)
    return _out(np.where((x >= 0) & (z > 0), k * h, 0.0))


def joint_vu(case: str, beta: float | None, gamma: float, z, x):
    """Joint limit density of (V, U) for gamma in (0,1), W integrated out."""
    _check_gamma(gamma)
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    zc, xc = np.maximum(z, 1e-300), np.maximum(x, 0)
    if _case(case) == "i":
        _need(beta is not None and beta + gamma - 1 > 0, "case i needs beta + gamma > 1")
        lc = special.gammaln(beta + 1.0) - special.gammaln(1.0 - gamma) - special.gammaln(beta + gamma - 1.0)
        v = math.exp(lc) * zc ** (-gamma) * (1.0 + zc + xc) ** (-beta - 1.0)
    else:
        v = zc ** (-gamma) * np.exp(-zc - xc) / math.gamma(1.0 - gamma)
    return _out(np.where((z > 0) & (x >= 0), v, 0.0))


def v_marginal_pdf(case: str, beta: float | None, gamma: float, z):
    """Density of V for gamma in [0,1)."""
    z = np.asarray(z, dtype=float)
    zc = np.maximum(z, 1e-300)
    if _case(case) == "i":
        _need(beta is not None and beta + gamma - 1 > 0, "case i needs beta + gamma > 1")
        lc = special.gammaln(beta) - special.gammaln(1.0 - gamma) - special.gammaln(beta + gamma - 1.0)
        v = math.exp(lc) * zc ** (-gamma) * (1.0 + zc) ** (-beta)
    else:
        v = zc ** (-gamma) * np.exp(-zc) / math.gamma(1.0 - gamma)
    return _out(np.where(z > 0, v, 0.0))


def v_marginal_cdf(case: str, beta: float | None, gamma: float, z):
    """CDF of V: a regularised incomplete beta (case i) or gamma (case ii) function."""
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    if _case(case) == "i":
        _need(beta is not None and beta + gamma - 1 > 0, "case i needs beta + gamma > 1")
        v = special.betainc(1.0 - gamma, beta + gamma - 1.0, z / (1.0 + z))
    else:
        v = special.gammainc(1.0 - gamma, z)
    return _out(v)


def u_marginal_pdf(case: str, beta: float | None, gamma: float, x):
    """Density of U: the killed-subordinator overshoot law with alpha = beta + gamma - 1."""
    if _case(case) == "i":
        return overshoot_pdf("i", beta + gamma - 1.0, x)
    return overshoot_pdf("ii", None, x)


def w_pdf(case: str, beta: float | None, gamma: float, t):
    """Density of W by quadrature of h_1 against the mixing kernel."""
    _check_gamma(gamma)
    alpha = 1.0 - gamma
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(ts.shape)
    for i, tv in enumerate(ts):
        if tv < 0:
            out[i] = 0.0
            continue
        sc = tv ** (1.0 / alpha)
        if _case(case) == "i":
            _need(beta is not None and beta + gamma - 1 > 0, "case i needs beta + gamma > 1")
            c = math.exp(special.gammaln(beta) - special.gammaln(beta + gamma - 1.0))
            out[i] = c * stable_law.expect_h1_grid(alpha, lambda z: (1.0 + sc * z) ** (-beta))
        else:
            out[i] = stable_law.expect_h1_grid(alpha, lambda z: np.exp(-z * sc))
    return float(out[0]) if np.ndim(t) == 0 else out


def w_cdf(case: str, beta: float | None, gamma: float, t):
    """CDF of W, reduced to one quadrature against h_1.

    Integrating the kernel over [0, T] in t first gives, in case i,
    ``Gamma(1+alpha) E[S**(-alpha) I_{v/(1+v)}(alpha, beta-alpha)]`` with
    ``v = T**(1/alpha) S`` and ``S`` distributed as h_1.
    """
    _check_gamma(gamma)
    alpha = 1.0 - gamma
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(ts.shape)
    for i, tv in enumerate(ts):
        if tv <= 0:
            out[i] = 0.0
            continue
        sc = tv ** (1.0 / alpha)
        if _case(case) == "i":
            _need(beta is not None and beta + gamma - 1 > 0, "case i needs beta + gamma > 1")
            b2 = beta - alpha

            def g(s):
                v = sc * s
                return s ** (-alpha) * special.betainc(alpha, b2, v / (1.0 + v))

        else:
            # same reduction with kernel exp(-t^(1/alpha) s)
            def g(s):
                return s ** (-alpha) * special.gammainc(alpha, sc * s)

        out[i] = math.gamma(1.0 + alpha) * stable_law.expect_h1_grid(alpha, g)
    return float(out[0]) if np.ndim(t) == 0 else out


def fdd_theta(case: str, beta: float | None, gamma: float, zs, ss, t: float) -> float:
    """Joint limit density of the normalised path at fractions ``ss`` (last one 1) and of W."""
    _check_gamma(gamma)
    alpha = 1.0 - gamma
    zs = [float(v) for v in zs]
    ss = [float(v) for v in ss]
    if len(zs) != len(ss) or not zs:
        raise ValueError("zs and ss must be non-empty and of equal length")
    if abs(ss[-1] - 1.0) > 1e-15 or any(b <= a for a, b in zip([0.0] + ss, ss)):
        raise ValueError("times must increase strictly and end at 1")
    val = 1.0
    zp, sp = 0.0, 0.0
    for z, s in zip(zs, ss):
        if z <= zp:
            return 0.0
        val *= stable_law.density_h(alpha, t * (s - sp), z - zp)
        zp, sp = z, s
    return float(val * undershoot_f(case, beta, gamma, zs[-1]))


def _log_h(alpha: float, t, z):
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    sc = t ** (1.0 / alpha)
    return stable_law.log_h1_fast(alpha, (z / sc).ravel()).reshape(np.broadcast(t, z).shape) - np.log(sc)


def _gl(lo: float, hi: float, cells: int, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(lo, hi, cells + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return (mid[:, None] + half[:, None] * x[None, :]).ravel(), (half[:, None] * w[None, :]).ravel()


def fdd_box_average(case: str, beta: float | None, gamma: float, ss, lower, upper,
                    cells: int = 4, nodes: int = 8, inner: int = 24) -> float:
    """Average of the joint path density over the box ``lower <= (z_1, ..., z_k, t) <= upper``.

    Supports ``k = 1`` and ``k = 2``.  The outer coordinates ``(z_k, t)`` use
    composite Gauss-Legendre rules; for ``k = 2`` the inner coordinate is
    integrated in ``log(z_2 - z_1)``, where the increment density is smooth
    even when it is sharply peaked near the diagonal.
    """
    _check_gamma(gamma)
    alpha = 1.0 - gamma
    ss = [float(v) for v in ss]
    k = len(ss)
    if k not in (1, 2) or len(lower) != k + 1 or len(upper) != k + 1:
        raise ValueError("box averages are implemented for one or two path points")
    zk, wz = _gl(lower[k - 1], upper[k - 1], cells, nodes)
    tt, wt = _gl(lower[k], upper[k], cells, nodes)
    Z, T = np.meshgrid(zk, tt, indexing="ij")
    W = np.outer(wz, wt)
    f = np.asarray(undershoot_f(case, beta, gamma, Z), dtype=float)
    if k == 1:
        dens = np.exp(_log_h(alpha, T, Z)) * f
    else:
        s1 = ss[0]
        a1, b1 = lower[0], upper[0]
        # increment range d = z2 - z1 with z1 in [a1, b1] and z1 > 0
        d_lo = np.maximum(Z - b1, 0.0)
        d_hi = Z - a1
        ok = d_hi > 0
        dens = np.zeros_like(Z)
        x, w = np.polynomial.legendre.leggauss(inner)
        # subdivide log(d) into equal pieces for a composite rule
        lo_log = np.log(np.where(d_lo > 0, d_lo, np.maximum(d_hi, 1e-300) * 1e-12))
        hi_log = np.log(np.where(ok, d_hi, 1.0))
        pieces = 6
        for p in range(pieces):
            a = lo_log + (hi_log - lo_log) * p / pieces
            b = lo_log + (hi_log - lo_log) * (p + 1) / pieces
            y = 0.5 * (a + b)[..., None] + 0.5 * (b - a)[..., None] * x
            d = np.exp(y)
            z1 = Z[..., None] - d
            lh = (_log_h(alpha, T[..., None] * (1.0 - s1), d)
                  + _log_h(alpha, T[..., None] * s1, np.maximum(z1, 1e-300)))
            val = np.where(z1 > 0, np.exp(lh) * d, 0.0)
            dens += 0.5 * (b - a) * np.sum(w * val, axis=-1)
        dens = np.where(ok, dens, 0.0) * f
    vol = float(np.prod(np.subtract(upper, lower)))
    return float(np.sum(W * dens) / vol)


# ---------------------------------------------------------------------------
# constants


def k_gamma(gamma: float) -> float:
    """Renewal-density constant ``1 / (Gamma(1+gamma) Gamma(2-gamma))``."""
    return math.exp(-special.gammaln(1.0 + gamma) - special.gammaln(2.0 - gamma))


def c_gamma_beta(gamma: float, beta: float | None, case: str) -> float:
    """Constant ``gamma E C**(gamma-1)`` with C the overshoot law; equals p(0) at gamma = 0."""
    if _case(case) == "i":
        _need(beta is not None and beta + gamma - 1 > 0, "case i needs beta + gamma > 1")
        return math.exp(special.gammaln(gamma + 1.0) + special.gammaln(beta) - special.gammaln(beta + gamma - 1.0))
    return math.gamma(gamma + 1.0)


def constants(gamma: float, beta: float | None, case: str, mean_hstar: float = math.inf,
              drift_hstar: float = 0.0) -> dict:
    """All normalising constants for a regime.

    ``mean_hstar`` and ``drift_hstar`` are the mean and drift of the
    descending ladder height; the ``c_adjusted`` entry applies the drift
    correction that depends on them.
    """
    c = _case(case)
    cgb = c_gamma_beta(gamma, beta, c)
    slope = (beta - 1.0) if c == "i" else 1.0
    if drift_hstar == 0.0:
        adjusted = cgb
    elif gamma > 0:
        adjusted = cgb + slope * drift_hstar / mean_hstar
    elif math.isinf(mean_hstar):
        adjusted = cgb
    else:
        adjusted = cgb + slope * drift_hstar / (mean_hstar - drift_hstar)
    variants = {
        "infinite_mean_hstar": cgb,
        "finite_mean_hstar": adjusted if math.isfinite(mean_hstar) else None,
    }
    return {"k_gamma": k_gamma(gamma), "c_gamma_beta": cgb, "c_adjusted": adjusted, "variants": variants}


# ---------------------------------------------------------------------------
# law objects


@dataclass(frozen=True)
class LimitLaw:
    """A named limit law with a density (and a CDF where one-dimensional)."""

    kind: str
    case: str
    beta: float | None
    gamma: float
    pdf: Callable = field(compare=False, repr=False)
    cdf: Callable | None = field(default=None, compare=False, repr=False)
    dim: int = 1

    @property
    def alpha(self) -> float:
        return 1.0 - self.gamma


def law(kind: str, case: str, beta: float | None = None, gamma: float = 0.0) -> LimitLaw:
    """Build a law by kind name.

    Kinds: ``overshoot``, ``passage``, ``undershoot`` (one-dimensional, with CDF),
    ``joint-vu``, ``joint-vuw``.
    """
    c = _case(case)
    if kind == "overshoot":
        a = (beta + gamma - 1.0) if c == "i" else None
        return LimitLaw(kind, c, beta, gamma, lambda x: overshoot_pdf(c, a, x), lambda x: overshoot_cdf(c, a, x))
    if kind == "passage":
        if gamma == 0:
            return LimitLaw(kind, c, beta, gamma, lambda t: passage_local_gamma0(c, beta, t),
                            lambda t: passage_cdf_gamma0(c, beta, t))
        cdf = tabulated_w_cdf(c, beta, gamma)
        return LimitLaw(kind, c, beta, gamma, lambda t: w_pdf(c, beta, gamma, t), cdf)
    if kind == "undershoot":
        return LimitLaw(kind, c, beta, gamma, lambda z: v_marginal_pdf(c, beta, gamma, z),
                        lambda z: v_marginal_cdf(c, beta, gamma, z))
    if kind == "joint-vu":
        if gamma == 0:
            return LimitLaw(kind, c, beta, gamma, lambda z, x: joint_vu_gamma0(c, beta, z, x), dim=2)
        return LimitLaw(kind, c, beta, gamma, lambda z, x: joint_vu(c, beta, gamma, z, x), dim=2)
    if kind == "joint-vuw":
        return LimitLaw(kind, c, beta, gamma, lambda z, x, t: joint_vuw(c, beta, gamma, z, x, t), dim=3)
    raise ValueError(f"unknown law kind {kind!r}")


@lru_cache(maxsize=32)
def tabulated_w_cdf(case: str, beta: float | None, gamma: float, n: int = 161):
    """Monotone interpolant of the W CDF on a log grid; cheap to call on large samples."""
    grid = np.geomspace(1e-4, 1e4, n)
    vals = w_cdf(case, beta, gamma, grid)
    vals = np.maximum.accumulate(np.clip(vals, 0.0, 1.0))
    interp = PchipInterpolator(np.log(grid), vals, extrapolate=False)
    lo_slope = vals[0] / grid[0]

    def cdf(t):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape)
        small = t < grid[0]
        big = t > grid[-1]
        mid = ~(small | big)
        out[small] = np.maximum(t[small], 0) * lo_slope
        out[big] = 1.0 - (1.0 - vals[-1]) * (grid[-1] / t[big]) ** _w_tail_index(case, beta, gamma)
        out[mid] = interp(np.log(t[mid]))
        return _out(out)

    return cdf


def _w_tail_index(case, beta, gamma):
    # W tail decays like t**(-(beta+gamma-1)/(1-gamma)) in case i, exponentially in case ii
    if case == "i":
        return (beta + gamma - 1.0) / (1.0 - gamma)
    return 50.0


def _need(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


def _check_gamma(gamma: float):
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1) for the stable regime")


def integrate_density(pdf: Callable, dim: int, upper: float = np.inf) -> float:
    """Total mass of a density on the positive orthant (used in self-checks)."""
    if dim == 1:
        return integrate.quad(lambda a: float(pdf(a)), 0, upper, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    if dim == 2:
        return integrate.dblquad(lambda x, z: float(pdf(z, x)), 0, upper, 0, upper, epsabs=1e-11, epsrel=1e-10)[0]
    raise ValueError("dim must be 1 or 2")
