"""Parametric heavy-tailed Levy models and their exact tail functionals.

A model is a compound Poisson stream of positive jumps (rate ``rate``, jump
law from a :class:`JumpFamily`) superposed with a negative component that is
either a linear drift, a compound Poisson stream of negative jumps, or a
stable subordinator entering with a minus sign.  There is no Gaussian part.

Tails are raw: ``pos_tail(model, x) = rate * survival(x)`` for every x > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate, special, stats


class ModelError(ValueError):
    """Invalid model parameters or an unsupported family combination."""


# ---------------------------------------------------------------------------
# jump families


@dataclass(frozen=True)
class Pareto:
    """Shifted Pareto law with survival ``(1 + x/scale)**(-shape)``."""

    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ModelError(f"Pareto needs shape>0 and scale>0, got {self}")

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 1.0, (1.0 + np.maximum(x, 0) / self.scale) ** (-self.shape))

    def log_survival(self, x):
        x = np.asarray(x, dtype=float)
        return -self.shape * np.log1p(np.maximum(x, 0) / self.scale)

    def mean(self) -> float:
        return self.scale / (self.shape - 1.0) if self.shape > 1 else math.inf

    def survival_integral(self, lo: float, hi: float) -> float:
        """Closed form of the survival integral over [lo, hi]."""
        s, b = self.scale, self.shape
        if hi <= lo:
            return 0.0
        if math.isinf(hi):
            if b <= 1:
                return math.inf
            return s / (b - 1.0) * (1.0 + lo / s) ** (1.0 - b)
        if b == 1.0:
            return s * (math.log1p(hi / s) - math.log1p(lo / s))
        return s / (b - 1.0) * ((1.0 + lo / s) ** (1.0 - b) - (1.0 + hi / s) ** (1.0 - b))

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        return self.scale * np.expm1(-np.log1p(-u) / self.shape)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return self.scale * np.expm1(-np.log1p(-p) / self.shape)

    def sample_excess(self, y, rng: np.random.Generator):
        """Draw ``J - y`` for ``J`` conditioned on ``J > y``."""
        y = np.asarray(y, dtype=float)
        v = 1.0 - rng.random(y.shape)
        return (self.scale + y) * np.expm1(-np.log(v) / self.shape)


@dataclass(frozen=True)
class Weibull:
    """Weibull law with survival ``exp(-(x/scale)**shape)``."""

    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ModelError(f"Weibull needs shape>0 and scale>0, got {self}")

    def survival(self, x):
        return np.exp(self.log_survival(x))

    def log_survival(self, x):
        x = np.asarray(x, dtype=float)
        return -(np.maximum(x, 0) / self.scale) ** self.shape

    def mean(self) -> float:
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def _upper(self, y: float) -> float:
        # integral of the survival over [y, inf)
        k, s = self.shape, self.scale
        return s / k * special.gamma(1.0 / k) * special.gammaincc(1.0 / k, (y / s) ** k)

    def survival_integral(self, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        k, s = self.shape, self.scale
        a = 1.0 / k
        if math.isinf(hi):
            return self._upper(lo)
        # lower regularised gamma difference keeps precision for small arguments
        p_lo = special.gammainc(a, (lo / s) ** k)
        p_hi = special.gammainc(a, (hi / s) ** k)
        return s / k * special.gamma(a) * (p_hi - p_lo)

    def mean_excess(self, u: float) -> float:
        """``int_u^inf survival / survival(u)`` evaluated without underflow."""
        k, s = self.shape, self.scale
        x = (u / s) ** k
        if x < 600:
            return self._upper(u) / math.exp(-x)
        return _mean_excess_quad(self, u)

    def sample(self, rng: np.random.Generator, size=None):
        e = rng.standard_exponential(size)
        return self.scale * e ** (1.0 / self.shape)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return self.scale * (-np.log1p(-p)) ** (1.0 / self.shape)

    def sample_excess(self, y, rng: np.random.Generator):
        y = np.asarray(y, dtype=float)
        e = rng.standard_exponential(y.shape)
        w = (y / self.scale) ** self.shape
        k = self.shape
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            # (w + e)**(1/k) - w**(1/k); the expm1 form avoids cancellation when w >> e
            far = w ** (1.0 / k) * np.expm1(np.log1p(e / w) / k)
            near = (w + e) ** (1.0 / k) - w ** (1.0 / k)
        return self.scale * np.where(w > e, far, near)


@dataclass(frozen=True)
class Lognormal:
    """Lognormal law: ``log J ~ Normal(location, spread**2)``."""

    location: float
    spread: float

    def __post_init__(self):
        if not self.spread > 0:
            raise ModelError(f"Lognormal needs spread>0, got {self}")

    def _std(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return (np.log(np.maximum(x, 0)) - self.location) / self.spread

    def survival(self, x):
        return stats.norm.sf(self._std(x))

    def log_survival(self, x):
        return stats.norm.logsf(self._std(x))

    def mean(self) -> float:
        return math.exp(self.location + 0.5 * self.spread**2)

    def _upper(self, y: float) -> float:
        # stop-loss transform E(J - y)^+
        if y <= 0:
            return self.mean() - y
        m, s = self.location, self.spread
        z = (math.log(y) - m) / s
        return self.mean() * stats.norm.sf(z - s) - y * stats.norm.sf(z)

    def survival_integral(self, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        if math.isinf(hi):
            return self._upper(lo)
        val, _ = integrate.quad(lambda y: float(self.survival(y)), lo, hi, epsrel=1e-12, limit=200)
        return val

    def mean_excess(self, u: float) -> float:
        z = (math.log(u) - self.location) / self.spread
        # Mills-ratio form: both stop-loss pieces relative to the survival
        r = math.exp(
            self.location + 0.5 * self.spread**2 + stats.norm.logsf(z - self.spread) - stats.norm.logsf(z)
        )
        val = r - u
        if val <= 1e-8 * u:
            return _mean_excess_quad(self, u)
        return val

    def sample(self, rng: np.random.Generator, size=None):
        return np.exp(self.location + self.spread * rng.standard_normal(size))

    def quantile(self, p):
        return np.exp(self.location + self.spread * stats.norm.ppf(p))

    def sample_excess(self, y, rng: np.random.Generator):
        y = np.asarray(y, dtype=float)
        v = 1.0 - rng.random(y.shape)
        ls = self.log_survival(y) + np.log(v)
        z = -special.ndtri_exp(ls)
        return np.maximum(np.exp(self.location + self.spread * z) - y, 0.0)


JumpFamily = Union[Pareto, Weibull, Lognormal]


def _mean_excess_quad(fam, u: float) -> float:
    lu = float(fam.log_survival(u))
    val, _ = integrate.quad(lambda y: math.exp(float(fam.log_survival(u + y)) - lu), 0, np.inf, epsabs=0, epsrel=1e-11, limit=400)
    return val


# ---------------------------------------------------------------------------
# negative components


@dataclass(frozen=True)
class Drift:
    """Deterministic downward drift at ``rate`` per unit time."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ModelError("drift rate must be positive")


@dataclass(frozen=True)
class NegativeJumps:
    """Compound Poisson stream of downward jumps of law ``step`` at ``rate``."""

    step: JumpFamily
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ModelError("negative jump rate must be positive")


@dataclass(frozen=True)
class StableSubordinator:
    """Stable subordinator of ``index`` with Laplace exponent ``scale * lam**index``.

    With ``scale=1`` the Levy tail is ``x**(-index) / Gamma(1 - index)``.
    """

    index: float
    scale: float = 1.0

    def __post_init__(self):
        if not (0 < self.index < 1 and self.scale > 0):
            raise ModelError("stable index must lie in (0,1) and scale be positive")

    @property
    def gamma(self) -> float:
        return 1.0 - self.index


NegativeComponent = Union[Drift, NegativeJumps, StableSubordinator]


@dataclass(frozen=True)
class ModelSpec:
    positive: JumpFamily
    rate: float
    negative: NegativeComponent
    gaussian_variance: float = 0.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ModelError("positive jump rate must be positive")
        if self.gaussian_variance != 0.0:
            raise ModelError("Gaussian components are not supported")

    @property
    def shift(self) -> float:
        """Linear coefficient of the path between jumps."""
        return -self.negative.rate if isinstance(self.negative, Drift) else 0.0


@dataclass(frozen=True)
class RegimeTag:
    case: str  # "i" (regularly varying) or "ii" (Gumbel domain)
    gamma: float
    mean_class: str  # "finite-mean" or "infinite-mean"
    beta: float | None = None

    @property
    def index(self) -> float:
        """Index of the stable limit, ``1 - gamma``."""
        return 1.0 - self.gamma


# ---------------------------------------------------------------------------
# tail functionals


def _check_level(x, lo=0.0):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > lo)):
        raise ValueError(f"level must exceed {lo}")
    return x


def pos_tail(model: ModelSpec, x):
    x = _check_level(x)
    out = model.rate * model.positive.survival(x)
    return float(out) if out.ndim == 0 else out


def neg_tail(model: ModelSpec, x):
    x = _check_level(x)
    neg = model.negative
    if isinstance(neg, Drift):
        out = np.zeros_like(x)
    elif isinstance(neg, NegativeJumps):
        out = neg.rate * neg.step.survival(x)
    else:
        out = neg.scale * x ** (-neg.index) / math.gamma(1.0 - neg.index)
    return float(out) if np.ndim(out) == 0 else out


def truncated_mean_pos(model: ModelSpec, x: float) -> float:
    """Integral of the positive tail over [1, x]."""
    if not x > 1:
        raise ValueError("truncated mean needs x > 1")
    return model.rate * model.positive.survival_integral(1.0, float(x))


def truncated_mean_neg(model: ModelSpec, x: float) -> float:
    """Integral of the negative tail over [1, x]."""
    if not x > 1:
        raise ValueError("truncated mean needs x > 1")
    neg = model.negative
    if isinstance(neg, Drift):
        return 0.0
    if isinstance(neg, NegativeJumps):
        return neg.rate * neg.step.survival_integral(1.0, float(x))
    g = neg.index
    return neg.scale / math.gamma(1.0 - g) * (float(x) ** (1.0 - g) - 1.0) / (1.0 - g)


def mean_x1(model: ModelSpec) -> float:
    """E X_1; ``-inf`` when the negative side has infinite mean."""
    neg = model.negative
    if isinstance(neg, StableSubordinator):
        return -math.inf
    up = model.rate * model.positive.mean()
    if isinstance(neg, Drift):
        down = neg.rate
    else:
        down = neg.rate * neg.step.mean()
    if math.isinf(down):
        if math.isinf(up):
            raise ModelError("both jump directions have infinite mean")
        return -math.inf
    m = up - down
    if not m < 0:
        raise ModelError(f"model does not drift to -inf (E X_1 = {m})")
    return m


def classify(model: ModelSpec) -> RegimeTag:
    neg = model.negative
    pos = model.positive
    if isinstance(neg, StableSubordinator):
        gamma = neg.gamma
    else:
        if isinstance(neg, NegativeJumps) and isinstance(neg.step, Pareto) and neg.step.shape < 1:
            raise ModelError("negative Pareto steps with shape < 1 are outside the supported regimes")
        gamma = 0.0
    m = mean_x1(model)
    mean_class = "finite-mean" if math.isfinite(m) else "infinite-mean"

    if isinstance(pos, Pareto):
        beta = pos.shape
        bound = 1.0 if gamma == 0 else 1.0 - gamma
        if not beta > bound:
            raise ModelError(f"Pareto shape {beta} must exceed {bound}")
        return RegimeTag("i", gamma, mean_class, beta)
    if isinstance(pos, Weibull) and not pos.shape < 1:
        raise ModelError("positive Weibull jumps need shape < 1 (subexponential)")
    return RegimeTag("ii", gamma, mean_class, None)
