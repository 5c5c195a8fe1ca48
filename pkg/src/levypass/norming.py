"""Space and time norming functions a(u), c(t), b(y) and r(u) = b(a(u))."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .model import (
    ModelSpec,
    Pareto,
    RegimeTag,
    StableSubordinator,
    classify,
    mean_x1,
    neg_tail,
    truncated_mean_neg,
)


class NormingError(RuntimeError):
    """Raised when a root search or quadrature fails to converge."""


def auxiliary_a(model: ModelSpec, u: float) -> float:
    """Space norming: ``u`` for Pareto jumps, the mean-excess ratio otherwise."""
    if not u > 0:
        raise ValueError("u must be positive")
    pos = model.positive
    if isinstance(pos, Pareto):
        return float(u)
    val = pos.mean_excess(float(u))
    if not (math.isfinite(val) and val > 0):
        raise NormingError(f"mean-excess evaluation failed at u={u}: {val}")
    return val


def solve_growth(t: float, truncated_mean: Callable[[float], float], max_iter: int = 200) -> float:
    """Largest root of ``c = t * A(c)`` for a sublinear increasing ``A`` on (1, inf).

    The map ``c -> c / A(c)`` blows up at 1, dips, then increases to infinity;
    the root on the increasing branch is the one that grows with ``t``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    g = lambda c: c / truncated_mean(c)  # noqa: E731
    # locate the increasing branch: walk a geometric grid to the minimiser
    c = 2.0
    best_c, best_g = c, g(c)
    for _ in range(2000):
        c *= 1.05
        gc = g(c)
        if gc < best_g:
            best_c, best_g = c, gc
        elif gc > best_g * 1.5 and gc > t:
            break
    if best_g > t:
        raise NormingError(f"c = t*A(c) has no solution for t={t} (min of c/A(c) is {best_g:.6g})")
    lo, hi = best_c, max(best_c * 2.0, 2.0)
    while g(hi) < t:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise NormingError("failed to bracket growth root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if g(mid) < t:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            return 0.5 * (lo + hi)
    raise NormingError(f"bisection did not converge after {max_iter} steps (t={t})")


def growth_c(model: ModelSpec, t: float) -> float:
    if not t > 0:
        raise ValueError("t must be positive")
    neg = model.negative
    if isinstance(neg, StableSubordinator):
        return (neg.scale * t) ** (1.0 / neg.index)
    m = mean_x1(model)
    if math.isfinite(m):
        return abs(m) * t
    return solve_growth(t, lambda c: truncated_mean_neg(model, c))


def inverse_b(model: ModelSpec, y: float) -> float:
    if not y > 0:
        raise ValueError("y must be positive")
    neg = model.negative
    if isinstance(neg, StableSubordinator):
        return y**neg.index / neg.scale
    m = mean_x1(model)
    if math.isfinite(m):
        return y / abs(m)
    return y / truncated_mean_neg(model, y)


def r_of_u(model: ModelSpec, u: float) -> float:
    return inverse_b(model, auxiliary_a(model, u))


@dataclass(frozen=True)
class NormingBundle:
    a: Callable[[float], float]
    c: Callable[[float], float]
    b: Callable[[float], float]
    r: Callable[[float], float]
    regime: RegimeTag


def norming_bundle(model: ModelSpec) -> NormingBundle:
    return NormingBundle(
        a=lambda u: auxiliary_a(model, u),
        c=lambda t: growth_c(model, t),
        b=lambda y: inverse_b(model, y),
        r=lambda u: r_of_u(model, u),
        regime=classify(model),
    )


def passage_time_ratio(model: ModelSpec, u: float) -> float:
    """Diagnostic ``r(u) * Gamma(gamma) * neg_tail(a(u))`` which tends to 1 in the stable regime."""
    neg = model.negative
    if not isinstance(neg, StableSubordinator):
        raise ValueError("ratio is only defined for the stable negative component")
    a = auxiliary_a(model, u)
    return r_of_u(model, u) * math.gamma(neg.gamma) * neg_tail(model, a)


__all__ = [
    "NormingBundle",
    "NormingError",
    "auxiliary_a",
    "growth_c",
    "inverse_b",
    "norming_bundle",
    "passage_time_ratio",
    "r_of_u",
    "solve_growth",
]
