"""Command-line front end: ``levypass {limits,simulate,verify,ladder,report}``.

Exit codes: 0 all enabled checks pass, 1 a check failed, 2 usage or
configuration error.  Every file goes under the output directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import limit_laws, verify
from .ladder import (
    LadderError,
    PointMass,
    WalkSpec,
    check_prop_q,
    check_vigon_direct,
    check_vigon_inverse,
    estimate_ladder,
    finite_mean_check,
    killing_consistency,
    renewal_slope_check,
)
from .model import (
    Drift,
    Lognormal,
    ModelError,
    ModelSpec,
    NegativeJumps,
    Pareto,
    StableSubordinator,
    Weibull,
    classify,
)
from .norming import NormingError, auxiliary_a, r_of_u
from .simulate import SimBudget, sample_conditional


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


# ---------------------------------------------------------------------------
# configuration

_FAMILIES = {"pareto": (Pareto, ("shape", "scale")), "weibull": (Weibull, ("shape", "scale")),
             "lognormal": (Lognormal, ("location", "spread")), "point": (PointMass, ("value",))}

_TOP_KEYS = {"run_id", "seed", "workers", "output_dir", "model", "levels", "samples", "method",
             "target_yield", "budget", "snapshots", "verify", "ladder"}
_VERIFY_KEYS = {"windows", "tolerances", "local_bins", "fdd_bins", "fdd_fraction", "strata", "level",
                "local_fraction"}
_LADDER_KEYS = {"walk", "paths", "horizon", "grid", "check_range", "prop_q_x", "prop_q_tolerance",
                "depth", "batches"}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")


def _family(d, where):
    _check_keys(d, {"family", "shape", "scale", "location", "spread", "value"}, where)
    name = d.get("family")
    if name not in _FAMILIES:
        raise ConfigError(f"{where}.family must be one of {sorted(_FAMILIES)}")
    cls, params = _FAMILIES[name]
    extra = set(d) - {"family"} - set(params)
    if extra:
        raise ConfigError(f"{where}: {sorted(extra)} not valid for {name}")
    try:
        return cls(**{k: float(d[k]) for k in params if k in d})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _family_dict(f) -> dict:
    for name, (cls, params) in _FAMILIES.items():
        if isinstance(f, cls):
            return {"family": name, **{k: float(getattr(f, k)) for k in params}}
    raise ConfigError(f"cannot serialise {f!r}")


def parse_model(d) -> ModelSpec:
    _check_keys(d, {"positive", "rate", "negative"}, "model")
    for k in ("positive", "rate", "negative"):
        if k not in d:
            raise ConfigError(f"model.{k} is required")
    pos = _family(d["positive"], "model.positive")
    neg = d["negative"]
    kind = neg.get("kind") if isinstance(neg, dict) else None
    try:
        if kind == "drift":
            _check_keys(neg, {"kind", "rate"}, "model.negative")
            negc = Drift(float(neg["rate"]))
        elif kind == "jumps":
            _check_keys(neg, {"kind", "rate", "step"}, "model.negative")
            negc = NegativeJumps(_family(neg["step"], "model.negative.step"), float(neg["rate"]))
        elif kind == "stable":
            _check_keys(neg, {"kind", "index", "scale"}, "model.negative")
            negc = StableSubordinator(float(neg["index"]), float(neg.get("scale", 1.0)))
        else:
            raise ConfigError("model.negative.kind must be drift, jumps or stable")
        return ModelSpec(pos, float(d["rate"]), negc)
    except KeyError as exc:
        raise ConfigError(f"model.negative is missing {exc}") from None


def model_dict(m: ModelSpec) -> dict:
    neg = m.negative
    if isinstance(neg, Drift):
        nd = {"kind": "drift", "rate": float(neg.rate)}
    elif isinstance(neg, NegativeJumps):
        nd = {"kind": "jumps", "rate": float(neg.rate), "step": _family_dict(neg.step)}
    else:
        nd = {"kind": "stable", "index": float(neg.index), "scale": float(neg.scale)}
    return {"positive": _family_dict(m.positive), "rate": float(m.rate), "negative": nd}


@dataclass(frozen=True)
class LadderConfig:
    walk: WalkSpec
    paths: int = 200_000
    horizon: int = 100_000
    grid: tuple = (0.1, 20.0, 64)
    check_range: tuple = (1.0, 5.0)
    prop_q_x: tuple = ()
    prop_q_tolerance: float = 0.1
    depth: float = 200.0
    batches: int = 20


@dataclass(frozen=True)
class VerifyConfig:
    windows: tuple = ((0.1, 3.0), (0.1, 3.0))
    tolerances: dict = field(default_factory=dict)
    local_bins: int = 8
    local_fraction: float = 0.9
    fdd_bins: int = 5
    fdd_fraction: float = 0.85
    strata: int = 5
    level: float = 0.95


@dataclass(frozen=True)
class ExperimentConfig:
    run_id: str = "run"
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    model: ModelSpec | None = None
    levels: tuple = ()
    samples: int = 1000
    method: str = "hazard"
    target_yield: float = 0.25
    budget: SimBudget = SimBudget()
    snapshots: tuple = (0.25, 0.5, 0.75)
    verify: VerifyConfig = VerifyConfig()
    ladder: LadderConfig | None = None


def parse_config(data) -> ExperimentConfig:
    if data is None:
        data = {}
    _check_keys(data, _TOP_KEYS, "config")
    kw = {}
    try:
        for k, cast in (("run_id", str), ("seed", int), ("workers", int), ("output_dir", str),
                        ("samples", int), ("method", str), ("target_yield", float)):
            if k in data:
                kw[k] = cast(data[k])
        if "model" in data:
            kw["model"] = parse_model(data["model"])
        if "levels" in data:
            kw["levels"] = tuple(float(u) for u in data["levels"])
        if "snapshots" in data:
            kw["snapshots"] = tuple(float(s) for s in data["snapshots"])
        if "budget" in data:
            _check_keys(data["budget"], {"t_cap", "depth_cap", "max_events"}, "budget")
            b = data["budget"]
            kw["budget"] = SimBudget(float(b.get("t_cap", 50.0)), float(b.get("depth_cap", 50.0)),
                                     int(b.get("max_events", 10_000_000)))
        if "verify" in data:
            v = data["verify"]
            _check_keys(v, _VERIFY_KEYS, "verify")
            vk = {}
            if "windows" in v:
                w = v["windows"]
                _check_keys(w, {"z", "t"}, "verify.windows")
                vk["windows"] = (tuple(map(float, w.get("z", (0.1, 3.0)))), tuple(map(float, w.get("t", (0.1, 3.0)))))
            if "tolerances" in v:
                _check_keys(v["tolerances"], {"O", "Z", "tau"}, "verify.tolerances")
                vk["tolerances"] = {k: float(x) for k, x in sorted(v["tolerances"].items())}
            for k, cast in (("local_bins", int), ("fdd_bins", int), ("strata", int), ("level", float),
                            ("local_fraction", float), ("fdd_fraction", float)):
                if k in v:
                    vk[k] = cast(v[k])
            kw["verify"] = VerifyConfig(**vk)
        if "ladder" in data:
            ld = data["ladder"]
            _check_keys(ld, _LADDER_KEYS, "ladder")
            if "walk" not in ld:
                raise ConfigError("ladder.walk is required")
            w = ld["walk"]
            _check_keys(w, {"up", "p_up", "down"}, "ladder.walk")
            walk = WalkSpec(_family(w["up"], "ladder.walk.up"), float(w["p_up"]),
                            _family(w["down"], "ladder.walk.down"))
            lk = {"walk": walk}
            for k, cast in (("paths", int), ("horizon", int), ("prop_q_tolerance", float), ("depth", float),
                            ("batches", int)):
                if k in ld:
                    lk[k] = cast(ld[k])
            if "grid" in ld:
                _check_keys(ld["grid"], {"lo", "hi", "cells"}, "ladder.grid")
                g = ld["grid"]
                lk["grid"] = (float(g["lo"]), float(g["hi"]), int(g["cells"]))
            if "check_range" in ld:
                lk["check_range"] = tuple(map(float, ld["check_range"]))
            if "prop_q_x" in ld:
                lk["prop_q_x"] = tuple(map(float, ld["prop_q_x"]))
            kw["ladder"] = LadderConfig(**lk)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    except (ModelError, LadderError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(**kw)


def config_dict(cfg: ExperimentConfig) -> dict:
    d = {
        "run_id": cfg.run_id,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "output_dir": cfg.output_dir,
        "levels": [float(u) for u in cfg.levels],
        "samples": cfg.samples,
        "method": cfg.method,
        "target_yield": cfg.target_yield,
        "budget": {"t_cap": cfg.budget.t_cap, "depth_cap": cfg.budget.depth_cap,
                   "max_events": cfg.budget.max_events},
        "snapshots": [float(s) for s in cfg.snapshots],
        "verify": {
            "windows": {"z": list(cfg.verify.windows[0]), "t": list(cfg.verify.windows[1])},
            "tolerances": dict(sorted(cfg.verify.tolerances.items())),
            "local_bins": cfg.verify.local_bins,
            "local_fraction": cfg.verify.local_fraction,
            "fdd_bins": cfg.verify.fdd_bins,
            "fdd_fraction": cfg.verify.fdd_fraction,
            "strata": cfg.verify.strata,
            "level": cfg.verify.level,
        },
    }
    if cfg.model is not None:
        d["model"] = model_dict(cfg.model)
    if cfg.ladder is not None:
        ld = cfg.ladder
        d["ladder"] = {
            "walk": {"up": _family_dict(ld.walk.up), "p_up": ld.walk.p_up, "down": _family_dict(ld.walk.down)},
            "paths": ld.paths,
            "horizon": ld.horizon,
            "grid": {"lo": ld.grid[0], "hi": ld.grid[1], "cells": ld.grid[2]},
            "check_range": list(ld.check_range),
            "prop_q_x": list(ld.prop_q_x),
            "prop_q_tolerance": ld.prop_q_tolerance,
            "depth": ld.depth,
            "batches": ld.batches,
        }
    return d


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_dict(cfg), sort_keys=True, default_flow_style=False)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return parse_config(data)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


def validate(cfg: ExperimentConfig, need_model: bool = True, need_ladder: bool = False):
    """Reject configurations that cannot run, before any work starts."""
    if "/" in cfg.run_id or "\\" in cfg.run_id or cfg.run_id in ("", ".", ".."):
        raise ConfigError("run_id must be a plain file-name stem")
    if cfg.workers < 1 or cfg.samples < 1:
        raise ConfigError("workers and samples must be positive")
    if cfg.method not in ("hazard", "rejection"):
        raise ConfigError("method must be hazard or rejection")
    if not 0 < cfg.target_yield <= 10:
        raise ConfigError("target_yield must lie in (0, 10]")
    if any(not 0 < s <= 1 for s in cfg.snapshots):
        raise ConfigError("snapshot fractions must lie in (0, 1]")
    if need_model:
        if cfg.model is None:
            raise ConfigError("config needs a model section")
        if not cfg.levels or any(u <= 0 for u in cfg.levels):
            raise ConfigError("levels must be a non-empty list of positive numbers")
        try:
            classify(cfg.model)
            for u in cfg.levels:
                auxiliary_a(cfg.model, u)
                r_of_u(cfg.model, u)
        except (ModelError, NormingError, ValueError) as exc:
            raise ConfigError(f"invalid model: {exc}") from None
    if need_ladder and cfg.ladder is None:
        raise ConfigError("config needs a ladder section")


# ---------------------------------------------------------------------------
# output helpers


def _out_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    p = Path(override if override is not None else cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _num(v) -> str:
    v = float(v)
    if v == 0:
        return "0.0"
    return repr(v)


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                    encoding="utf-8", newline="")


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if hasattr(o, "__dataclass_fields__"):
        return _jsonable(asdict(o))
    return o


def level_tag(u: float) -> str:
    return format(float(u), "g")


def sample_file(out: Path, run_id: str, u: float) -> Path:
    return out / f"{run_id}_u{level_tag(u)}.csv"


def sample_header(k: int):
    h = ["replicate", "u", "tau", "Z", "O"]
    for i in range(1, k + 1):
        h += [f"s{i}", f"x{i}"]
    return h + ["attempts"]


def read_samples(path: Path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    head, body = rows[0], rows[1:]
    cols = {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(head)}
    return cols


# ---------------------------------------------------------------------------
# commands


def cmd_limits(law_name: str, case: str, beta, gamma: float, grid, out: Path) -> Path:
    try:
        lw = limit_laws.law(law_name, case, beta, gamma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    names = {"overshoot": ["x"], "passage": ["t"], "undershoot": ["z"], "joint-vu": ["z", "x"],
             "joint-vuw": ["z", "x", "t"]}[law_name]
    header = names + ["density"] + (["cdf"] if lw.cdf is not None else [])
    rows = []
    for pt in itertools.product(grid, repeat=lw.dim):
        row = [_num(v) for v in pt] + [_num(lw.pdf(*pt))]
        if lw.cdf is not None:
            row.append(_num(lw.cdf(pt[0])))
        rows.append(row)
    tag = f"b{level_tag(beta)}" if beta is not None else "b-"
    path = out / f"limits_{law_name}_{case}_{tag}_g{level_tag(gamma)}.csv"
    write_csv(path, header, rows)
    return path


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    manifest = {"config_sha256": config_hash(cfg), "run_id": cfg.run_id, "levels": {}}
    k = len(cfg.snapshots)
    for u in cfg.levels:
        t0 = time.perf_counter()
        res = sample_conditional(cfg.model, u, cfg.samples, base_seed=cfg.seed, workers=cfg.workers,
                                 budget=cfg.budget, snapshots=cfg.snapshots, method=cfg.method,
                                 target_yield=cfg.target_yield)
        rows = []
        for s in res.samples:
            row = [str(s.replicate), _num(u), _num(s.tau), _num(s.Z), _num(s.O)]
            for frac, x in s.snapshots:
                row += [_num(frac), _num(x)]
            row.append(str(s.attempts))
            rows.append(row)
        path = sample_file(out, cfg.run_id, u)
        write_csv(path, sample_header(k), rows)
        manifest["levels"][level_tag(u)] = {
            "file": path.name,
            "samples": len(res.samples),
            "replicates": res.replicates,
            "points": res.points,
            "acceptance_rate": res.acceptance_rate,
            "p_hat": res.p_hat,
            "p_ci": list(res.p_ci),
            "shortfall": res.shortfall,
            "method": res.method,
            "statuses": res.statuses,
            "shared_path_fraction": res.shared_fraction,
            "wall_clock_s": round(time.perf_counter() - t0, 3),
        }
    write_json(out / f"{cfg.run_id}_manifest.json", manifest)
    return manifest


def _targets(model: ModelSpec):
    tag = classify(model)
    beta = tag.beta if tag.case == "i" else None
    laws = {
        "O": limit_laws.law("overshoot", tag.case, beta, tag.gamma),
        "Z": limit_laws.law("undershoot", tag.case, beta, tag.gamma),
        "tau": limit_laws.law("passage", tag.case, beta, tag.gamma),
    }
    return tag, beta, laws


def cmd_verify(cfg: ExperimentConfig, samples_dir: Path, out: Path) -> dict:
    if not samples_dir.is_dir():
        raise ConfigError(f"samples directory {samples_dir} does not exist")
    tag, beta, laws = _targets(cfg.model)
    vc = cfg.verify
    data = {}
    for u in cfg.levels:
        path = sample_file(samples_dir, cfg.run_id, u)
        if not path.exists():
            raise ConfigError(f"missing sample file {path}")
        cols = read_samples(path)
        a, r = auxiliary_a(cfg.model, u), r_of_u(cfg.model, u)
        norm = {"O": cols["O"] / a, "Z": cols["Z"] / a, "tau": cols["tau"] / r}
        xs = [k for k in cols if k.startswith("x")]
        norm["snap"] = {cols[f"s{k[1:]}"][0]: -cols[k] / a for k in xs} if len(cols["O"]) else {}
        data[u] = (norm, a, r)

    def runner(u):
        return data[u][0]

    conv = verify.convergence_report(cfg.levels, {k: laws[k].cdf for k in ("O", "Z", "tau")}, runner,
                                     vc.tolerances)
    top = max(cfg.levels)
    norm, a, r = data[top]
    criteria = {}
    for k in ("O", "Z", "tau"):
        if k in vc.tolerances:
            d = conv.rows[-1].distances[k]
            criteria[f"ks_{k}"] = {"value": d, "tolerance": vc.tolerances[k], "passed": d <= vc.tolerances[k]}
    if conv.trend is not None:
        criteria["trend"] = {"value": conv.trend, "passed": all(conv.trend.values())}
    cond = verify.conditional_overshoot_check(norm["Z"], norm["O"], tag.case, beta, vc.strata, vc.level)
    criteria["conditional_overshoot"] = {"passed": cond.passed, "between_pvalue": cond.between_pvalue,
                                         "strata": [asdict(s) for s in cond.strata]}
    if tag.gamma > 0:
        zw, tw = vc.windows
        loc = verify.local_density_check(
            np.c_[norm["Z"], norm["tau"]], None, [zw, tw], vc.local_bins, level=vc.level,
            box_average=lambda lo, hi: limit_laws.fdd_box_average(tag.case, beta, tag.gamma, [1.0], lo, hi))
        criteria["local_density"] = {"pass_fraction": loc.pass_fraction, "required": vc.local_fraction,
                                     "occupied": loc.occupied, "insufficient": loc.insufficient,
                                     "passed": bool(loc.pass_fraction >= vc.local_fraction)}
        if 0.5 in norm["snap"]:
            fdd = verify.local_density_check(
                np.c_[norm["snap"][0.5], norm["Z"], norm["tau"]], None, [zw, zw, tw], vc.fdd_bins, level=vc.level,
                box_average=lambda lo, hi: limit_laws.fdd_box_average(tag.case, beta, tag.gamma, [0.5, 1.0], lo, hi))
            criteria["fdd_k2"] = {"pass_fraction": fdd.pass_fraction, "required": vc.fdd_fraction,
                                  "occupied": fdd.occupied, "insufficient": fdd.insufficient,
                                  "passed": bool(fdd.pass_fraction >= vc.fdd_fraction)}
    report = {
        "run_id": cfg.run_id,
        "regime": {"case": tag.case, "gamma": tag.gamma, "beta": beta},
        "tolerances": dict(sorted(vc.tolerances.items())),
        "levels": [{"u": row.u, "n": row.n, "ks": row.distances,
                    "a_u": data[row.u][1], "r_u": data[row.u][2]} for row in conv.rows],
        "criteria": criteria,
        "pass": all(c["passed"] for c in criteria.values()),
    }
    write_json(out / f"{cfg.run_id}_verify.json", report)
    write_csv(out / f"{cfg.run_id}_distances.csv", ["u", "n", "ks_O", "ks_Z", "ks_tau"],
              [[_num(r_.u), str(r_.n)] + [_num(r_.distances[k]) for k in ("O", "Z", "tau")] for r_ in conv.rows])
    return report


def cmd_ladder(cfg: ExperimentConfig, out: Path) -> dict:
    lc = cfg.ladder
    grid = np.geomspace(lc.grid[0], lc.grid[1], lc.grid[2])
    est = estimate_ladder(lc.walk, lc.paths, lc.horizon, grid, seed=cfg.seed, batches=lc.batches, depth=lc.depth)
    lo, hi = lc.check_range
    us = grid[(grid >= lo) & (grid <= hi)]
    level = 1.0 - 0.05 / max(len(us), 1)
    criteria = {}
    finite = math.isfinite(lc.walk.mean)
    if len(us):
        inv = check_vigon_inverse(est, us=us, level=level)
        direct = check_vigon_direct(est, us=us, level=level)
        for name, rows in (("inverse", inv), ("direct_positive", direct["positive"]),
                           ("direct_negative", direct["negative"])):
            used = [r for r in rows if not r.sparse]
            criteria[f"vigon_{name}"] = {"passed": all(r.passed for r in used), "points": len(used),
                                         "max_abs_rel_error": max((abs(r.rel_error) for r in used), default=math.nan),
                                         "rows": [asdict(r) for r in rows]}
    kc = killing_consistency(est)
    criteria["killing_consistency"] = kc
    if finite:
        criteria["finite_mean"] = finite_mean_check(est)
        criteria["renewal_slope"] = renewal_slope_check(est)
    if lc.prop_q_x:
        rows = check_prop_q(est, lc.prop_q_x)
        last = rows[-1]
        rel = abs(last.ratio / est.q - 1.0)
        criteria["prop_q"] = {"passed": bool(rel <= lc.prop_q_tolerance), "relative_gap": rel,
                              "q_hat": est.q, "rows": [asdict(r) for r in rows]}
    criteria["horizon_diagnostic"] = {"passed": est.diagnostics["late_ladder_ok"], **est.diagnostics}
    report = {
        "walk": {"up": _family_dict(lc.walk.up), "p_up": lc.walk.p_up, "down": _family_dict(lc.walk.down),
                 "mean": lc.walk.mean},
        "q_hat": est.q,
        "q_ci": list(est.q_ci),
        "mean_hstar": est.mean_hstar,
        "n_paths": est.n_paths,
        "horizon": est.horizon,
        "simultaneous_level": level,
        "criteria": criteria,
        "pass": all(c["passed"] for c in criteria.values()),
    }
    write_json(out / f"{cfg.run_id}_ladder.json", report)
    write_csv(out / f"{cfg.run_id}_ladder_grid.csv",
              ["x", "pih_tail", "pih_lo", "pih_hi", "gstar", "gstar_lo", "gstar_hi", "pihstar_tail", "a_hstar"],
              [[_num(x), _num(est.pih_tail[i]), _num(est.pih_ci[i, 0]), _num(est.pih_ci[i, 1]),
                _num(est.gstar[i]), _num(est.gstar_ci[i, 0]), _num(est.gstar_ci[i, 1]),
                _num(est.pihstar_tail[i]), _num(est.a_hstar[i])] for i, x in enumerate(est.grid)])
    return report


def cmd_report(cfg: ExperimentConfig, out: Path) -> dict:
    found = {}
    for suffix in ("verify", "ladder"):
        p = out / f"{cfg.run_id}_{suffix}.json"
        if p.exists():
            found[suffix] = json.loads(p.read_text(encoding="utf-8"))
    if not found:
        raise ConfigError(f"no reports for run {cfg.run_id!r} in {out}")
    summary = {
        "run_id": cfg.run_id,
        "reports": {k: {"pass": v["pass"], "criteria": {c: d["passed"] for c, d in v["criteria"].items()}}
                    for k, v in sorted(found.items())},
        "pass": all(v["pass"] for v in found.values()),
    }
    write_json(out / f"{cfg.run_id}_report.json", summary)
    return summary


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levypass", description="First-passage limit laws and simulation.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workers", type=int, help="override the worker count")
    common.add_argument("--validate", action="store_true", help="check the config and exit")
    lim = sub.add_parser("limits", parents=[common], help="tabulate a limit law on a grid")
    lim.add_argument("--law", required=True)
    lim.add_argument("--case", default="i", choices=["i", "ii"])
    lim.add_argument("--beta", type=float)
    lim.add_argument("--gamma", type=float, default=0.0)
    lim.add_argument("--grid", default="", help="comma-separated values used on every axis")
    sub.add_parser("simulate", parents=[common], help="conditional passage samples per level")
    ver = sub.add_parser("verify", parents=[common], help="compare samples with the limit laws")
    ver.add_argument("--samples", help="directory holding sample CSVs (default: output directory)")
    sub.add_parser("ladder", parents=[common], help="ladder estimates and identity checks")
    sub.add_parser("report", parents=[common], help="summarise existing reports")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.workers is not None:
            cfg = replace(cfg, workers=args.workers)
        cmd = args.command
        validate(cfg, need_model=cmd in ("simulate", "verify"), need_ladder=cmd == "ladder")
        if args.validate:
            sys.stdout.write(dump_config(cfg))
            return 0
        out = _out_dir(cfg, args.out)
        if cmd == "limits":
            try:
                grid = [float(v) for v in args.grid.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"bad grid {args.grid!r}") from None
            path = cmd_limits(args.law, args.case, args.beta, args.gamma, grid, out)
            print(path)
            return 0
        if cmd == "simulate":
            manifest = cmd_simulate(cfg, out)
            print(json.dumps(_jsonable(manifest), sort_keys=True, indent=2))
            return 0
        if cmd == "verify":
            samples = Path(args.samples) if args.samples else out
            report = cmd_verify(cfg, samples, out)
        elif cmd == "ladder":
            report = cmd_ladder(cfg, out)
        else:
            report = cmd_report(cfg, out)
        print(json.dumps(_jsonable({"pass": report["pass"]}), sort_keys=True))
        return 0 if report["pass"] else 1
    except ConfigError as exc:
        print(f"levypass: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
