"""Exact event-driven simulation of first passage above a level.

Between positive jumps every supported path is nonincreasing (drift,
negative jumps, or a negated stable subordinator), so passage above ``u``
can only happen at a positive jump epoch.  Paths are therefore generated
epoch to epoch in vectorised blocks: exponential gaps, the exact negative
increment over each gap, then the positive jump.

Intermediate path values (snapshots, thinning candidates) are filled in
after the fact: deterministically for a drift, by placing the negative jumps
of a gap at independent uniform times, or by exact stable-bridge draws.

Two conditional samplers are provided:

``rejection``
    simulate unconditioned paths, keep those that pass.  Exact but only
    practical when the passage probability is not small.
``hazard``
    by the compensation formula, the passage triple has intensity
    ``rate * S(u - X_t) dt`` along the pre-passage path.  Each path carries a
    Poisson process of marked points with that intensity divided by a
    constant ``M``; every point, completed with a jump conditioned to cross,
    has exactly the conditional law of (tau, Z, O).  Points from one path
    share its prefix, so a run is a Cox sample rather than i.i.d.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import stable_law
from .model import Drift, ModelSpec, NegativeJumps, classify
from .norming import auxiliary_a, growth_c, r_of_u

SNAPSHOT_DEFAULT = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class SimBudget:
    t_cap: float = 50.0
    depth_cap: float = 50.0
    max_events: int = 10_000_000

    def __post_init__(self):
        if not (self.t_cap > 0 and self.depth_cap > 0 and self.max_events > 0):
            raise ValueError("budget entries must be positive")


@dataclass(frozen=True)
class FirstPassageSample:
    u: float
    tau: float
    Z: float
    O: float
    snapshots: tuple = ()
    replicate: int = -1
    attempts: int = 0


@dataclass(frozen=True)
class Passage:
    sample: FirstPassageSample


@dataclass(frozen=True)
class NoPassage:
    elapsed: float
    position: float
    running_inf: float
    events: int
    reason: str


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for replicate ``stream`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))))


# ---------------------------------------------------------------------------
# stable increments


def kanter_standard(alpha: float, rng: np.random.Generator, size=None):
    """Standard one-sided stable variates (Laplace transform ``exp(-lam**alpha)``)."""
    u = math.pi * (1.0 - rng.random(size))
    e = rng.standard_exponential(size)
    a = alpha
    k = (np.sin(a * u) / np.sin(u)) ** (1.0 / (1.0 - a)) * np.sin((1.0 - a) * u) / np.sin(a * u)
    return (k / e) ** ((1.0 - a) / a)


def stable_increment(alpha: float, dt, rng: np.random.Generator, size=None, scale: float = 1.0):
    """Increment of the stable subordinator over ``dt`` (Laplace exponent ``scale*lam**alpha``)."""
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise ValueError("dt must be positive")
    if size is None and dt.ndim:
        size = dt.shape
    return (scale * dt) ** (1.0 / alpha) * kanter_standard(alpha, rng, size)


# ---------------------------------------------------------------------------
# event sources


@dataclass
class Block:
    gaps: np.ndarray
    jumps: np.ndarray
    neg: np.ndarray
    cp_counts: np.ndarray | None = None
    cp_sizes: np.ndarray | None = None


class RandomSource:
    """Draws blocks of (gap, negative increment, positive jump) from the model."""

    def __init__(self, model: ModelSpec, rng: np.random.Generator):
        self.model = model
        self.rng = rng

    def block(self, k: int) -> Block:
        m, rng = self.model, self.rng
        gaps = rng.standard_exponential(k) / m.rate
        neg = m.negative
        counts = sizes = None
        if isinstance(neg, Drift):
            dec = neg.rate * gaps
        elif isinstance(neg, NegativeJumps):
            counts = rng.poisson(neg.rate * gaps)
            sizes = np.asarray(neg.step.sample(rng, int(counts.sum())), dtype=float)
            dec = np.bincount(np.repeat(np.arange(k), counts), weights=sizes, minlength=k)
        else:
            dec = stable_increment(neg.index, gaps, rng, scale=neg.scale)
        jumps = np.asarray(m.positive.sample(rng, k), dtype=float)
        return Block(gaps, jumps, dec, counts, sizes)


class ScriptedSource:
    """Replays given gaps and jumps (drift models); for tests and shared-randomness oracles."""

    def __init__(self, model: ModelSpec, gaps, jumps, rng: np.random.Generator | None = None):
        if not isinstance(model.negative, Drift):
            raise ValueError("scripted paths are only supported for a drift")
        self.model = model
        self.gaps = np.asarray(gaps, dtype=float)
        self.jumps = np.asarray(jumps, dtype=float)
        self.pos = 0
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def block(self, k: int) -> Block:
        i, j = self.pos, min(self.pos + k, len(self.gaps))
        if i >= j:
            raise IndexError("scripted path exhausted")
        self.pos = j
        g = self.gaps[i:j]
        return Block(g, self.jumps[i:j], self.model.negative.rate * g)


# ---------------------------------------------------------------------------
# trajectory storage and reconstruction


class Trajectory:
    """Epoch skeleton of one path plus lazily refined values inside gaps."""

    def __init__(self, model: ModelSpec, source):
        self.model = model
        self.source = source
        self.rng = source.rng
        self.t_start: list = []
        self.t_end: list = []
        self.x_start: list = []
        self.pre: list = []
        self.post: list = []
        self.cp_off: list = []
        self.cp_sizes: list = []
        self.n = 0
        self._time = 0.0
        self._x = 0.0
        self._cp_total = 0
        self._inner: dict = {}
        self._cp_times: dict = {}
        self._cat = None

    def extend(self, k: int):
        b = self.source.block(k)
        k = len(b.gaps)
        ends = self._time + np.cumsum(b.gaps)
        starts = np.concatenate([[self._time], ends[:-1]])
        steps = b.jumps - b.neg
        post = self._x + np.cumsum(steps)
        x0 = np.concatenate([[self._x], post[:-1]])
        pre = x0 - b.neg
        self.t_start.append(starts)
        self.t_end.append(ends)
        self.x_start.append(x0)
        self.pre.append(pre)
        self.post.append(post)
        if b.cp_counts is not None:
            self.cp_off.append(self._cp_total + np.concatenate([[0], np.cumsum(b.cp_counts)]))
            self.cp_sizes.append(b.cp_sizes)
            self._cp_total += int(b.cp_counts.sum())
        self._time, self._x = float(ends[-1]), float(post[-1])
        i0 = self.n
        self.n += k
        self._cat = None
        return i0, self.n, starts, ends, x0, pre, post, b

    def _arrays(self):
        if self._cat is None:
            cat = {
                "t_start": np.concatenate(self.t_start),
                "t_end": np.concatenate(self.t_end),
                "x_start": np.concatenate(self.x_start),
                "pre": np.concatenate(self.pre),
            }
            if self.cp_sizes:
                cat["cp_sizes"] = np.concatenate(self.cp_sizes)
                offs = [o[:-1] for o in self.cp_off]
                cat["cp_lo"] = np.concatenate(offs)
                cat["cp_hi"] = np.concatenate([o[1:] for o in self.cp_off])
            self._cat = cat
        return self._cat

    def neg_partial(self, g: int, delta: float) -> float:
        """Negative-component decrement accumulated ``delta`` into gap ``g``."""
        a = self._arrays()
        gap = a["t_end"][g] - a["t_start"][g]
        neg = self.model.negative
        total = a["x_start"][g] - a["pre"][g]
        if delta >= gap:
            return total
        if delta <= 0:
            return 0.0
        if isinstance(neg, Drift):
            return neg.rate * delta
        if isinstance(neg, NegativeJumps):
            lo, hi = int(a["cp_lo"][g]), int(a["cp_hi"][g])
            if hi == lo:
                return 0.0
            times = self._cp_times.get(g)
            if times is None:
                times = self._cp_times[g] = self.rng.random(hi - lo) * gap
            return float(a["cp_sizes"][lo:hi][times <= delta].sum())
        pts = self._inner.setdefault(g, [(0.0, 0.0), (gap, total)])
        offs = [p[0] for p in pts]
        j = int(np.searchsorted(offs, delta))
        if j < len(pts) and offs[j] == delta:
            return pts[j][1]
        (ta, da), (tb, db) = pts[j - 1], pts[j]
        if db - da <= 0:
            val = da
        else:
            frac = (delta - ta) / (tb - ta)
            val = da + stable_law.sample_bridge(neg.index, tb - ta, db - da, frac, self.rng)
        pts.insert(j, (delta, val))
        return val

    def position_at(self, s: float) -> float:
        """Left limit ``X(s-)`` for ``0 < s`` within the simulated range."""
        if s <= 0:
            return 0.0
        a = self._arrays()
        g = int(np.searchsorted(a["t_start"], s, side="left")) - 1
        if g < 0:
            return 0.0
        if s >= a["t_end"][g]:
            return float(a["pre"][g])
        return float(a["x_start"][g] - self.neg_partial(g, s - a["t_start"][g]))


def _snapshots(traj: Trajectory, tau: float, fractions) -> tuple:
    out = []
    for s in sorted(fractions):
        out.append((float(s), traj.position_at(s * tau)))
    return tuple(out)


# ---------------------------------------------------------------------------
# single path: plain passage


@dataclass(frozen=True)
class _Scales:
    a: float
    r: float


def _scales(model: ModelSpec, u: float) -> _Scales:
    return _Scales(auxiliary_a(model, u), r_of_u(model, u))


def simulate_first_passage(model: ModelSpec, u: float, rng=None, budget: SimBudget = SimBudget(),
                           snapshots=SNAPSHOT_DEFAULT, source=None, horizon: float | None = None,
                           scales: _Scales | None = None):
    """Simulate one unconditioned path until it passes ``u`` or the budget stops it."""
    if not u > 0:
        raise ValueError("u must be positive")
    if source is None:
        source = RandomSource(model, rng if rng is not None else np.random.default_rng())
    sc = scales or _scales(model, u)
    traj = Trajectory(model, source)
    t_kill, x_kill = budget.t_cap * sc.r, -budget.depth_cap * sc.a
    k = 128
    inf = 0.0
    while True:
        i0, i1, starts, ends, x0, pre, post, _ = traj.extend(k)
        crossed = post > u
        killed = (ends > t_kill) & (post < x_kill)
        stop = crossed | killed
        if horizon is not None:
            stop |= ends > horizon
        over = i1 >= budget.max_events
        if stop.any():
            j = int(np.argmax(stop))
            inf = min(inf, float(pre[: j + 1].min()))
            if crossed[j] and (horizon is None or ends[j] <= horizon):
                tau = float(ends[j])
                smp = FirstPassageSample(u, tau, 0.0 - float(pre[j]), float(post[j] - u),
                                         _snapshots(traj, tau, snapshots))
                return Passage(smp)
            reason = "budget" if killed[j] else "horizon"
            return NoPassage(float(ends[j]), float(post[j]), inf, i0 + j + 1, reason)
        inf = min(inf, float(pre.min()))
        if over:
            return NoPassage(float(ends[-1]), float(post[-1]), inf, i1, "max_events")
        k = min(2 * k, 8192)


# ---------------------------------------------------------------------------
# single path: hazard points


def log_deterministic_passage_mass(model: ModelSpec, u: float) -> float:
    """Logarithm of :func:`deterministic_passage_mass`, stable for tiny tails."""
    pos = model.positive
    lsu = float(pos.log_survival(u))
    r = r_of_u(model, u)

    def f(v):
        return math.exp(float(pos.log_survival(u + growth_c(model, r * v))) - lsu)

    val = 0.0
    for lo, hi in ((0, 1), (1, 10), (10, 100), (100, np.inf)):
        val += integrate.quad(f, lo, hi, epsrel=1e-8, limit=200)[0]
    return math.log(model.rate * r * val) + lsu


def deterministic_passage_mass(model: ModelSpec, u: float) -> float:
    """``int_0^inf rate * S(u + c(t)) dt``: the passage probability along the growth curve."""
    return math.exp(log_deterministic_passage_mass(model, u))


@dataclass
class PathPoints:
    points: list = field(default_factory=list)
    status: str = ""
    events: int = 0
    elapsed: float = 0.0
    position: float = 0.0
    hazard: float = 0.0


def hazard_points(model: ModelSpec, u: float, rng: np.random.Generator, log_m: float,
                  budget: SimBudget = SimBudget(), snapshots=SNAPSHOT_DEFAULT,
                  scales: _Scales | None = None) -> PathPoints:
    """Crossing points of one path at intensity ``rate * S(u - X_t) / M`` (``log_m = log M``)."""
    pos = model.positive
    sc = scales or _scales(model, u)
    traj = Trajectory(model, RandomSource(model, rng))
    t_kill, x_kill = budget.t_cap * sc.r, -budget.depth_cap * sc.a
    log_rate = math.log(model.rate)
    out = PathPoints()
    cands = []
    k = 128
    while True:
        i0, i1, starts, ends, x0, pre, post, _ = traj.extend(k)
        crossed = post > u
        killed = (ends > t_kill) & (post < x_kill)
        stop = crossed | killed
        last = int(np.argmax(stop)) if stop.any() else len(ends) - 1
        sl = slice(0, last + 1)
        gaps = ends[sl] - starts[sl]
        lsx0 = pos.log_survival(u - x0[sl])
        lk = log_rate + lsx0 - log_m
        out.hazard += float(np.sum(np.exp(lk + np.log(gaps))))
        nc = rng.poisson(np.exp(lk) * gaps)
        for g in np.nonzero(nc)[0]:
            offs = np.sort(rng.random(nc[g]) * gaps[g])
            cands.extend((i0 + int(g), float(starts[g]), float(o), float(lsx0[g])) for o in offs)
        if stop.any():
            out.status = "crossed" if crossed[last] else "budget"
            out.events, out.elapsed, out.position = i0 + last + 1, float(ends[last]), float(post[last])
            break
        if i1 >= budget.max_events:
            out.status = "max_events"
            out.events, out.elapsed, out.position = i1, float(ends[-1]), float(post[-1])
            break
        k = min(2 * k, 8192)
    for g, t0, off, lsx in cands:
        x = float(traj._arrays()["x_start"][g] - traj.neg_partial(g, off))
        if math.log(1.0 - rng.random()) < float(pos.log_survival(u - x)) - lsx:
            tau = t0 + off
            over = float(pos.sample_excess(np.array([u - x]), rng)[0])
            out.points.append((tau, 0.0 - x, over, _snapshots(traj, tau, snapshots)))
    return out


# ---------------------------------------------------------------------------
# conditional sampling


@dataclass
class ConditionalResult:
    samples: list
    replicates: int
    points: int
    p_hat: float
    p_ci: tuple
    shortfall: bool
    method: str
    statuses: dict
    log_m: float | None = None
    shared_fraction: float = 0.0

    @property
    def acceptance_rate(self) -> float:
        return len(self.samples) / self.replicates if self.replicates else 0.0


def _replicate(args):
    (model, u, method, seed, rep, log_m, budget, snaps, scales) = args
    rng = rng_stream(seed, rep)
    if method == "rejection":
        res = simulate_first_passage(model, u, rng, budget, snaps, scales=scales)
        if isinstance(res, Passage):
            s = res.sample
            return [(s.tau, s.Z, s.O, s.snapshots)], "crossed"
        return [], res.reason
    pp = hazard_points(model, u, rng, log_m, budget, snaps, scales=scales)
    return pp.points, pp.status


def _chunk(args):
    base, start, count = args
    return [_replicate(base[:4] + (start + i,) + base[4:]) for i in range(count)]


def sample_conditional(model: ModelSpec, u: float, n: int, base_seed: int = 0, workers: int = 1,
                       budget: SimBudget = SimBudget(), snapshots=SNAPSHOT_DEFAULT,
                       method: str = "hazard", target_yield: float = 0.25, chunk: int = 32,
                       max_replicates: int = 50_000_000) -> ConditionalResult:
    """Collect ``n`` conditional passage samples; output depends only on ``(base_seed, inputs)``.

    Replicate ``i`` always uses stream ``i``; replicates are processed in fixed
    waves of chunks and the first ``n`` samples in replicate order are kept, so
    the worker count does not change the result.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if method not in ("hazard", "rejection"):
        raise ValueError(f"unknown method {method!r}")
    classify(model)
    scales = _scales(model, u)
    log_m = None
    if method == "hazard":
        log_m = log_deterministic_passage_mass(model, u) - math.log(target_yield)
    base = (model, u, method, int(base_seed), log_m, budget, tuple(snapshots), scales)
    results: list = []
    got = 0
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while got < n and len(results) < max_replicates:
            # wave size depends only on results so far, never on the worker count
            rate = got / len(results) if got else target_yield
            want = 1.1 * (n - got) / max(rate, 1e-3) if results else 8 * chunk
            wave = int(min(max(math.ceil(want / chunk), 8), 256))
            tasks = [(base, len(results) + i * chunk, chunk) for i in range(wave)]
            outs = pool.map(_chunk, tasks) if pool else map(_chunk, tasks)
            for o in outs:
                results.extend(o)
            got = sum(len(p) for p, _ in results)
    finally:
        if pool:
            pool.shutdown()
    samples = []
    used = 0
    for rep, (pts, _) in enumerate(results):
        used = rep + 1
        for tau, z, o, snaps in sorted(pts, key=lambda p: p[0]):
            samples.append(FirstPassageSample(u, tau, z, o, snaps, rep, rep + 1))
        if len(samples) >= n:
            break
    shortfall = len(samples) < n
    samples = samples[:n]
    used_res = results[:used]
    total_pts = sum(len(p) for p, _ in used_res)
    statuses: dict = {}
    for _, st in used_res:
        statuses[st] = statuses.get(st, 0) + 1
    multi = sum(len(p) for p, _ in used_res if len(p) > 1)
    if method == "hazard":
        m = math.exp(log_m)
        p_hat = m * total_pts / used
        half = 1.96 * m * math.sqrt(max(total_pts, 1)) / used
    else:
        p_hat = total_pts / used
        half = 1.96 * math.sqrt(max(p_hat * (1 - p_hat), 1.0 / used) / used)
    return ConditionalResult(
        samples=samples,
        replicates=used,
        points=total_pts,
        p_hat=p_hat,
        p_ci=(max(p_hat - half, 0.0), p_hat + half),
        shortfall=shortfall,
        method=method,
        statuses=dict(sorted(statuses.items())),
        log_m=log_m,
        shared_fraction=multi / total_pts if total_pts else 0.0,
    )


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))


__all__ = [
    "Block",
    "ConditionalResult",
    "FirstPassageSample",
    "NoPassage",
    "Passage",
    "PathPoints",
    "RandomSource",
    "SNAPSHOT_DEFAULT",
    "ScriptedSource",
    "SimBudget",
    "Trajectory",
    "deterministic_passage_mass",
    "default_workers",
    "log_deterministic_passage_mass",
    "hazard_points",
    "kanter_standard",
    "rng_stream",
    "sample_conditional",
    "simulate_first_passage",
    "stable_increment",
]
