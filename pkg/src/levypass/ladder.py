"""Ladder-height estimation through the random-walk embedding, identity checks
linking ladder measures to the jump tails, and the killed-subordinator
overshoot harness.

A compound Poisson process ``X_t = S_{N_t}`` with unit-rate ``N`` has the step
law of ``S`` as its Levy measure.  Its ascending ladder process jumps at unit
rate by the successive strict ascending ladder increments of ``S`` and is
killed at rate ``q = 1 - P(S ever exceeds 0)``; the descending ladder process
jumps at unit rate by the weak descending increments and is never killed.

Every estimator below is a sample mean of per-path quantities.  Paths are
split into independent batches; identity checks pair each batch's outer
average with the inner estimates of the next batch, so the two factors of a
product always come from independent paths, and confidence intervals are
Student-t intervals over batch values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .model import Pareto, Weibull
from .simulate import rng_stream


class LadderError(ValueError):
    """Invalid walk, grid mismatch, or a point outside the estimated range."""


@dataclass(frozen=True)
class PointMass:
    """Degenerate step size; used for deterministic walks."""

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise LadderError("point mass must be positive")

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.value, 1.0, 0.0)

    def mean(self) -> float:
        return self.value

    def survival_integral(self, lo: float, hi: float) -> float:
        return max(0.0, min(hi, self.value) - lo) if hi > lo else 0.0

    def sample(self, rng: np.random.Generator, size=None):
        return np.full(size, self.value) if size is not None else self.value


@dataclass(frozen=True)
class WalkSpec:
    """Steps are ``+up`` with probability ``p_up`` and ``-down`` otherwise."""

    up: object
    p_up: float
    down: object

    def __post_init__(self):
        if not 0.0 <= self.p_up < 1.0:
            raise LadderError("p_up must lie in [0, 1)")
        if not self.mean < 0:
            raise LadderError(f"walk must drift to -inf, mean step is {self.mean}")

    @property
    def mean(self) -> float:
        up = self.p_up * self.up.mean() if self.p_up > 0 else 0.0
        return up - (1.0 - self.p_up) * self.down.mean()

    def pos_tail(self, x):
        """``P(S_1 > x)`` for ``x > 0``: the positive Levy tail of the embedding."""
        return self.p_up * np.asarray(self.up.survival(x), dtype=float)

    def neg_tail(self, x):
        return (1.0 - self.p_up) * np.asarray(self.down.survival(x), dtype=float)

    def neg_tail_integral(self, lo: float, hi: float) -> float:
        return (1.0 - self.p_up) * self.down.survival_integral(lo, hi)

    def steps(self, rng: np.random.Generator, shape):
        sign = rng.random(shape) < self.p_up
        down = np.asarray(self.down.sample(rng, shape), dtype=float)
        if self.p_up == 0:
            return -down
        up = np.asarray(self.up.sample(rng, shape), dtype=float)
        return np.where(sign, up, -down)


def calibration_walk() -> WalkSpec:
    """+Pareto(3) w.p. 0.3, -exponential w.p. 0.7, scaled so the mean step is -0.5."""
    up = Pareto(3.0, 1.0)
    scale = (0.3 * up.mean() + 0.5) / 0.7
    return WalkSpec(up, 0.3, Weibull(1.0, scale))


def default_grid() -> np.ndarray:
    return np.geomspace(0.1, 20.0, 64)


# ---------------------------------------------------------------------------
# path statistics


@dataclass
class _Batch:
    n: int
    z1: np.ndarray  # first strict ascending ladder heights (finite ones)
    zstar1: np.ndarray  # first weak descending ladder heights
    gstar_counts: np.ndarray  # summed renewal counts on the grid
    gstar_sq: np.ndarray  # summed squared per-path counts
    fine: np.ndarray  # histogram of all weak descending heights on the fine mesh
    ladders: np.ndarray  # number of strict ascending ladder epochs per path
    horizon_hits: int
    late_ladders: int


def _walk_batch(walk: WalkSpec, n: int, rng, grid, depth: float, horizon: int, mesh) -> _Batch:
    pos = np.zeros(n)
    run_min = np.zeros(n)
    run_max = np.zeros(n)
    z1 = np.full(n, np.nan)
    zs1 = np.full(n, np.nan)
    ladders = np.zeros(n, dtype=np.int64)
    last_ladder = np.full(n, -1, dtype=np.int64)
    g_counts = np.ones((n, len(grid)))  # epoch 0 at height 0
    fine = np.zeros(len(mesh) - 1)  # epochs after the zeroth one
    active = np.arange(n)
    steps_done = 0
    k = 64
    while active.size and steps_done < horizon:
        k_eff = min(k, horizon - steps_done)
        m = active.size
        s = pos[active, None] + np.cumsum(walk.steps(rng, (m, k_eff)), axis=1)
        # weak descending epochs: at or below every earlier value
        cmin = np.minimum(np.minimum.accumulate(s, axis=1), run_min[active, None])
        prev_min = np.concatenate([run_min[active, None], cmin[:, :-1]], axis=1)
        desc = s <= prev_min
        # strict ascending epochs: above every earlier value
        cmax = np.maximum(np.maximum.accumulate(s, axis=1), run_max[active, None])
        prev_max = np.concatenate([run_max[active, None], cmax[:, :-1]], axis=1)
        asc = s > prev_max
        # stop each path at its first step below -depth
        below = s < -depth
        has_below = below.any(axis=1)
        stop_at = np.where(has_below, below.argmax(axis=1), k_eff - 1)
        live = np.arange(k_eff)[None, :] <= stop_at[:, None]
        desc &= live
        asc &= live
        # the step that reaches -depth is a descending epoch of height > depth: not counted
        desc &= ~below
        # first weak descending height
        need = np.isnan(zs1[active]) & desc.any(axis=1)
        if need.any():
            rows = np.nonzero(need)[0]
            cols = desc[rows].argmax(axis=1)
            zs1[active[rows]] = -s[rows, cols]
        # path that stops by crossing -depth before any weak descent: its first height is that step
        need = np.isnan(zs1[active]) & has_below
        if need.any():
            rows = np.nonzero(need)[0]
            zs1[active[rows]] = -s[rows, stop_at[rows]]
        need = (ladders[active] == 0) & asc.any(axis=1)
        if need.any():
            rows = np.nonzero(need)[0]
            cols = asc[rows].argmax(axis=1)
            z1[active[rows]] = s[rows, cols]
        ladders[active] += asc.sum(axis=1)
        any_asc = asc.any(axis=1)
        if any_asc.any():
            rows = np.nonzero(any_asc)[0]
            last = k_eff - 1 - asc[rows, ::-1].argmax(axis=1)
            last_ladder[active[rows]] = steps_done + last
        h = -s[desc]
        if h.size:
            rows = np.nonzero(desc)[0]
            idx = np.searchsorted(grid, h, side="left")  # count epochs with height <= grid point
            cnt = np.zeros((m, len(grid) + 1))
            np.add.at(cnt, (rows, idx), 1.0)
            g_counts[active] += np.cumsum(cnt, axis=1)[:, :-1]
            fine += np.histogram(h, bins=mesh)[0]
        last_col = stop_at
        pos[active] = s[np.arange(m), last_col]
        run_min[active] = np.minimum(run_min[active], cmin[np.arange(m), last_col])
        run_max[active] = np.maximum(run_max[active], cmax[np.arange(m), last_col])
        steps_done += k_eff
        active = active[~has_below]
        k = int(min(2 * k, 1024, max(16, 4_000_000 // max(active.size, 1))))
    late = int(np.sum(last_ladder >= 0.9 * horizon))
    return _Batch(
        n=n,
        z1=z1[~np.isnan(z1)],
        zstar1=zs1[~np.isnan(zs1)],
        gstar_counts=g_counts.sum(axis=0),
        gstar_sq=(g_counts**2).sum(axis=0),
        fine=fine,
        ladders=ladders,
        horizon_hits=int(active.size),
        late_ladders=late,
    )


@dataclass
class LadderEstimate:
    walk: WalkSpec
    q: float
    q_ci: tuple
    grid: np.ndarray
    pih_tail: np.ndarray
    pih_ci: np.ndarray
    pih_counts: np.ndarray
    gstar: np.ndarray
    gstar_ci: np.ndarray
    pihstar_tail: np.ndarray
    a_hstar: np.ndarray
    mean_hstar: float
    mean_hstar_ci: tuple
    n_paths: int
    horizon: int
    depth: float
    diagnostics: dict
    batches: list = field(repr=False, default_factory=list)
    mesh: np.ndarray = field(repr=False, default=None)


def _t_ci(values, level: float = 0.95):
    v = np.asarray(values, dtype=float)
    k = v.shape[0]
    mean = v.mean(axis=0)
    if k < 2:
        return mean, np.full_like(mean, np.inf)
    half = stats.t.ppf(0.5 + level / 2, k - 1) * v.std(axis=0, ddof=1) / math.sqrt(k)
    return mean, half


def estimate_ladder(walk: WalkSpec, n_paths: int, horizon: int = 100_000, grid=None, seed: int = 0,
                    batches: int = 20, depth: float = 200.0, mesh_step: float = 0.005) -> LadderEstimate:
    """Monte Carlo estimates of ``q``, the ascending ladder tail and the descending renewal function.

    Each path runs until it first falls below ``-depth`` (or the step horizon).
    A strict new maximum after that point has probability of order
    ``p_up * E[(up - depth)^+] / |mean|`` per path, reported in the diagnostics.
    """
    if n_paths < batches:
        raise LadderError("need at least one path per batch")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise LadderError("grid must be positive and increasing")
    mesh = np.arange(0.0, depth + mesh_step, mesh_step)
    per = [n_paths // batches + (1 if i < n_paths % batches else 0) for i in range(batches)]
    bs = [_walk_batch(walk, m, rng_stream(seed, i), grid, depth, horizon, mesh) for i, m in enumerate(per)]

    q_b = np.array([1.0 - b.z1.size / b.n for b in bs])
    pih_b = np.array([[np.sum(b.z1 > u) / b.n for u in grid] for b in bs])
    g_b = np.array([b.gstar_counts / b.n for b in bs])
    ms_b = np.array([b.zstar1.mean() for b in bs])
    q, q_h = _t_ci(q_b)
    pih, pih_h = _t_ci(pih_b)
    g, g_h = _t_ci(g_b)
    ms, ms_h = _t_ci(ms_b)
    zs = np.concatenate([b.zstar1 for b in bs])
    z1 = np.concatenate([b.z1 for b in bs])
    pihstar = np.array([np.mean(zs > u) for u in grid])
    a_hstar = np.array([np.mean(np.minimum(zs, u)) for u in grid])
    up_mean = walk.up.mean() if walk.p_up > 0 else 0.0
    residual = 0.0
    if walk.p_up > 0:
        # crude bound on a new maximum once the path sits below -depth
        residual = walk.p_up * walk.up.survival_integral(depth, math.inf) / abs(walk.mean)
    diag = {
        "horizon_hits": int(sum(b.horizon_hits for b in bs)),
        "late_ladder_fraction": sum(b.late_ladders for b in bs) / n_paths,
        "late_ladder_ok": sum(b.late_ladders for b in bs) / n_paths < 1e-3,
        "depth_residual_bound": residual,
        "up_mean": up_mean,
    }
    return LadderEstimate(
        walk=walk,
        q=float(q),
        q_ci=(float(q - q_h), float(q + q_h)),
        grid=grid,
        pih_tail=pih,
        pih_ci=np.stack([pih - pih_h, pih + pih_h], axis=1),
        pih_counts=np.array([np.sum(z1 > u) for u in grid]),
        gstar=g,
        gstar_ci=np.stack([g - g_h, g + g_h], axis=1),
        pihstar_tail=pihstar,
        a_hstar=a_hstar,
        mean_hstar=float(ms),
        mean_hstar_ci=(float(ms - ms_h), float(ms + ms_h)),
        n_paths=n_paths,
        horizon=horizon,
        depth=depth,
        diagnostics=diag,
        batches=bs,
        mesh=mesh,
    )


# ---------------------------------------------------------------------------
# identity checks


@dataclass(frozen=True)
class IdentityRow:
    u: float
    lhs: float
    rhs: float
    rel_error: float
    diff: float
    ci_half: float
    passed: bool
    sparse: bool


def _tail_fn(sorted_vals: np.ndarray, n: int):
    """Empirical ``P(V > x)`` over ``n`` paths from sorted finite values."""

    def f(x):
        return (sorted_vals.size - np.searchsorted(sorted_vals, x, side="right")) / n

    return f


def _check_grid(est: LadderEstimate, us):
    us = np.asarray(us, dtype=float)
    if np.any(us <= 0) or np.any(us > est.grid[-1]) or np.any(us < est.grid[0]):
        raise LadderError(f"points must lie within the estimation grid [{est.grid[0]}, {est.grid[-1]}]")
    return us


def _rows(us, lhs_b, rhs_b, sparse, level: float) -> list:
    lhs, _ = _t_ci(lhs_b)
    rhs, _ = _t_ci(rhs_b)
    diff, half = _t_ci(np.asarray(lhs_b) - np.asarray(rhs_b), level)
    out = []
    for i, u in enumerate(us):
        rel = rhs[i] / lhs[i] - 1.0 if lhs[i] > 0 else math.nan
        out.append(IdentityRow(float(u), float(lhs[i]), float(rhs[i]), float(rel), float(diff[i]),
                               float(half[i]), bool(abs(diff[i]) <= half[i]), bool(sparse[i])))
    return out


def check_vigon_inverse(est: LadderEstimate, pos_tail=None, us=None, level: float = 0.95) -> list:
    """Ascending ladder tail against the renewal-weighted positive jump tail.

    ``level`` is the per-point confidence; pass ``1 - 0.05/len(us)`` for a
    simultaneous band over all points.
    """
    us = _check_grid(est, est.grid if us is None else us)
    tail = est.walk.pos_tail if pos_tail is None else pos_tail
    mids = 0.5 * (est.mesh[:-1] + est.mesh[1:])
    lhs_b, rhs_b = [], []
    k = len(est.batches)
    for i, b in enumerate(est.batches):
        other = est.batches[(i + 1) % k]
        z = np.sort(b.z1)
        lhs_b.append([_tail_fn(z, b.n)(u) for u in us])
        w = other.fine / other.n
        nz = w > 0
        # zeroth epoch at height 0, later epochs at mesh midpoints
        rhs_b.append([float(tail(u) + np.sum(w[nz] * np.asarray(tail(mids[nz] + u)))) for u in us])
    counts = np.array([np.sum(np.concatenate([b.z1 for b in est.batches]) > u) for u in us])
    return _rows(us, lhs_b, rhs_b, counts < 30, level)


def check_vigon_direct(est: LadderEstimate, us=None, level: float = 0.95) -> dict:
    """Both jump tails against products of ascending and descending ladder measures."""
    us = _check_grid(est, est.grid if us is None else us)
    walk = est.walk
    k = len(est.batches)
    pos_b, neg_b, pos_rhs, neg_rhs, floor_b = [], [], [], [], []
    for i, b in enumerate(est.batches):
        other = est.batches[(i + 1) % k]
        hstar_tail = _tail_fn(np.sort(other.zstar1), other.zstar1.size)
        h_tail = _tail_fn(np.sort(other.z1), other.n)
        q_other = 1.0 - other.z1.size / other.n
        pos_b.append(walk.pos_tail(us))
        neg_b.append(walk.neg_tail(us))
        z, zs = b.z1, b.zstar1
        pr, nr, fl = [], [], []
        for u in us:
            sel = z[z > u]
            pr.append(float(np.sum(hstar_tail(sel - u))) / b.n)
            sel = zs[zs > u]
            integral = float(np.sum(h_tail(sel - u))) / zs.size
            floor = q_other * float(np.mean(zs > u))
            nr.append(integral + floor)
            fl.append(floor)
        pos_rhs.append(pr)
        neg_rhs.append(nr)
        floor_b.append(fl)
    z_all = np.concatenate([b.z1 for b in est.batches])
    zs_all = np.concatenate([b.zstar1 for b in est.batches])
    pos_sparse = np.array([np.sum(z_all > u) < 30 for u in us])
    neg_sparse = np.array([np.sum(zs_all > u) < 30 for u in us])
    return {
        "positive": _rows(us, pos_b, pos_rhs, pos_sparse, level),
        "negative": _rows(us, neg_b, neg_rhs, neg_sparse, level),
        "killing_floor": _t_ci(floor_b)[0],
    }


@dataclass(frozen=True)
class PropQRow:
    x: float
    a_x: float
    a_hstar: float
    ratio: float
    ci: tuple


def check_prop_q(est: LadderEstimate, xs) -> list:
    """Ratio of integrated negative jump tail to integrated descending ladder tail, both over ``[1, x]``.

    Returns ``nan`` ratios at ``x <= 1`` where both integrals vanish.
    """
    xs = np.asarray(xs, dtype=float)
    walk = est.walk
    out = []
    ratios_b = []
    for b in est.batches:
        zs = b.zstar1
        row = []
        for x in xs:
            ah = float(np.mean(np.clip(zs, 1.0, max(x, 1.0)) - 1.0)) if x > 1 else 0.0
            ax = walk.neg_tail_integral(1.0, x) if x > 1 else 0.0
            row.append(ax / ah if ah > 0 else math.nan)
        ratios_b.append(row)
    zs = np.concatenate([b.zstar1 for b in est.batches])
    mean_r, half = _t_ci(ratios_b)
    for i, x in enumerate(xs):
        if x <= 1:
            out.append(PropQRow(float(x), 0.0, 0.0, math.nan, (math.nan, math.nan)))
            continue
        ah = float(np.mean(np.clip(zs, 1.0, x) - 1.0))
        ax = float(walk.neg_tail_integral(1.0, x))
        r = ax / ah
        out.append(PropQRow(float(x), ax, ah, r, (float(mean_r[i] - half[i]), float(mean_r[i] + half[i]))))
    return out


def finite_mean_check(est: LadderEstimate) -> dict:
    """``|E S_1|`` against ``q * E[first weak descending height]`` with a batch CI on the product."""
    prod_b = [(1.0 - b.z1.size / b.n) * est.batches[(i + 1) % len(est.batches)].zstar1.mean()
              for i, b in enumerate(est.batches)]
    m, h = _t_ci(prod_b)
    target = abs(est.walk.mean)
    return {"abs_mean": target, "product": float(m), "ci": (float(m - h), float(m + h)),
            "passed": bool(abs(m - target) <= h)}


def killing_consistency(est: LadderEstimate) -> dict:
    """``P(H_1 < inf)`` from ladder counts against ``exp(-q)``.

    At local time 1 the ascending process has made ``N ~ Poisson(1)`` ladder
    steps, so ``P(H_1 < inf) = E[P(N <= L)]`` where ``L`` counts strict ladder
    epochs of the path.
    """
    k = len(est.batches)
    direct_b, model_b = [], []
    for i, b in enumerate(est.batches):
        direct_b.append(float(np.mean(stats.poisson.cdf(b.ladders, 1.0))))
        other = est.batches[(i + 1) % k]
        model_b.append(math.exp(-(1.0 - other.z1.size / other.n)))
    d, _ = _t_ci(direct_b)
    e, _ = _t_ci(model_b)
    diff, h = _t_ci(np.array(direct_b) - np.array(model_b))
    return {"direct": float(d), "exp_minus_q": float(e), "diff": float(diff), "ci_half": float(h),
            "passed": bool(abs(diff) <= h)}


def renewal_slope_check(est: LadderEstimate, tol: float = 0.1) -> dict:
    """Slope of the renewal function over the upper half of the grid against ``1 / E[H*_1]``."""
    g, x = est.gstar, est.grid
    half = len(x) // 2
    slope = float(np.polyfit(x[half:], g[half:], 1)[0])
    target = 1.0 / est.mean_hstar
    return {"slope": slope, "target": target, "passed": bool(abs(slope / target - 1.0) <= tol)}


# ---------------------------------------------------------------------------
# killed subordinator harness


@dataclass
class KilledSample:
    overshoot: np.ndarray
    scaled: np.ndarray
    a_u: float
    replicates: int
    killed_before_first_jump: int
    p_hat: float
    method: str


def _family_scale(family, u: float) -> float:
    if isinstance(family, Pareto):
        return float(u)
    return float(family.mean_excess(u))


def overshoot_killed_subordinator(family, rate: float, q: float, u: float, n: int, seed: int = 0,
                                  method: str = "hazard", target_yield: float = 0.25,
                                  max_replicates: int = 400_000_000) -> KilledSample:
    """Overshoot of ``u`` by a compound Poisson subordinator killed at rate ``q``, given passage.

    ``rejection`` keeps replicates that pass before the kill.  ``hazard``
    attaches Poisson(``c * S(u - Y_k)``) points to each pre-jump position
    ``Y_k`` of the unconditioned path; each point is completed by a jump
    conditioned to exceed ``u - Y_k`` and has exactly the conditional law.
    """
    if not q > 0 or not rate > 0 or not u > 0 or n < 1:
        raise LadderError("need q, rate, u > 0 and n >= 1")
    if method not in ("hazard", "rejection"):
        raise LadderError(f"unknown method {method!r}")
    p_jump = rate / (rate + q)
    a_u = _family_scale(family, u)
    out: list = []
    reps = 0
    killed0 = 0
    weight_c = 1.0
    if method == "hazard":
        approx = float(family.survival(u)) / (1.0 - p_jump)
        weight_c = target_yield / approx
    batch = 0
    count = 0.0
    while sum(len(o) for o in out) < n and reps < max_replicates:
        rng = rng_stream(seed, batch)
        batch += 1
        m = 65536
        reps += m
        # number of jumps before the kill
        jumps = rng.geometric(1.0 - p_jump, m) - 1
        killed0 += int(np.sum(jumps == 0))
        tot = int(jumps.sum())
        sizes = np.asarray(family.sample(rng, tot), dtype=float)
        owner = np.repeat(np.arange(m), jumps)
        starts = np.concatenate([[0], np.cumsum(jumps)[:-1]])
        csum = np.cumsum(sizes)
        base = np.concatenate([[0.0], csum])[starts[owner]]
        after = csum - base
        before = after - sizes
        if method == "rejection":
            crossing = (after > u) & (before <= u)
            o = after[crossing] - u
            count += o.size
            # path order within the batch is preserved
            out.append(o)
        else:
            alive = before <= u
            lam = weight_c * np.asarray(family.survival(u - before[alive]), dtype=float)
            k = rng.poisson(lam)
            y = np.repeat(u - before[alive], k)
            count += k.sum()
            out.append(np.asarray(family.sample_excess(y, rng), dtype=float))
    o = np.concatenate(out)[:n]
    p_hat = count / reps if method == "rejection" else count / (weight_c * reps)
    return KilledSample(o, o / a_u, a_u, reps, killed0, float(p_hat), method)


__all__ = [
    "IdentityRow",
    "KilledSample",
    "LadderError",
    "LadderEstimate",
    "PointMass",
    "PropQRow",
    "WalkSpec",
    "calibration_walk",
    "check_prop_q",
    "check_vigon_direct",
    "check_vigon_inverse",
    "default_grid",
    "estimate_ladder",
    "finite_mean_check",
    "killing_consistency",
    "overshoot_killed_subordinator",
    "renewal_slope_check",
]
