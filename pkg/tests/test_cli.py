import json

import pytest
import yaml

from levypass import cli

SIM_CONFIG = """
# small case-i campaign
run_id: demo
seed: 7
workers: 1
levels: [20, 50]
samples: 150
model:
  positive: {family: pareto, shape: 2.5}
  rate: 1.0
  negative: {kind: drift, rate: 2.0}
verify:
  tolerances: {O: 0.5, Z: 0.5, tau: 0.5}
  strata: 3
"""

LADDER_CONFIG = """
run_id: walk
seed: 1
ladder:
  walk:
    up: {family: pareto, shape: 3.0}
    p_up: 0.3
    down: {family: weibull, shape: 1.0, scale: 0.9285714285714286}
  paths: 20000
  grid: {lo: 0.1, hi: 20.0, cells: 64}
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_limits_grid_values(tmp_path):
    assert cli.main(["limits", "--law", "joint-vu", "--case", "i", "--beta", "2", "--grid", "0,1",
                     "--out", str(tmp_path)]) == 0
    path = tmp_path / "limits_joint-vu_i_b2_g0.csv"
    lines = path.read_text().splitlines()
    assert lines[0] == "z,x,density"
    assert len(lines) == 5
    last = lines[-1].split(",")
    assert (last[0], last[1]) == ("1.0", "1.0")
    assert float(last[2]) == pytest.approx(2 / 27, abs=1e-16)
    first = path.read_bytes()
    cli.main(["limits", "--law", "joint-vu", "--case", "i", "--beta", "2", "--grid", "0,1", "--out", str(tmp_path)])
    assert path.read_bytes() == first
    assert b"\r" not in first


def test_limits_empty_grid_and_unknown_law(tmp_path):
    assert cli.main(["limits", "--law", "overshoot", "--case", "ii", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "limits_overshoot_ii_b-_g0.csv").read_text() == "x,density,cdf\n"
    assert cli.main(["limits", "--law", "nope", "--out", str(tmp_path)]) == 2


def test_config_round_trip(tmp_path):
    cfg = cli.load_config(write(tmp_path, SIM_CONFIG))
    text = cli.dump_config(cfg)
    again = cli.parse_config(yaml.safe_load(text))
    assert cli.dump_config(again) == text
    assert again == cfg
    lad = cli.load_config(write(tmp_path, LADDER_CONFIG, "l.yaml"))
    assert cli.dump_config(cli.parse_config(yaml.safe_load(cli.dump_config(lad)))) == cli.dump_config(lad)


@pytest.mark.parametrize("bad", [
    "run_id: x\nbogus: 1\n",
    "model: {positive: {family: pareto, shape: 2.5}, rate: 1, negative: {kind: drift, rate: 2, extra: 1}}\n",
    "verify: {tolerance: {O: 1}}\n",
    "model: {positive: {family: cauchy}, rate: 1, negative: {kind: drift, rate: 2}}\n",
])
def test_unknown_or_bad_keys_rejected(tmp_path, bad):
    with pytest.raises(cli.ConfigError):
        cli.load_config(write(tmp_path, bad))


def test_validate_flag_and_invalid_model(tmp_path, capsys):
    p = write(tmp_path, SIM_CONFIG)
    assert cli.main(["simulate", "--config", p, "--validate", "--out", str(tmp_path / "o")]) == 0
    assert "run_id: demo" in capsys.readouterr().out
    assert not (tmp_path / "o").exists()
    weak = SIM_CONFIG.replace("negative: {kind: drift, rate: 2.0}", "negative: {kind: drift, rate: 0.5}")
    assert cli.main(["simulate", "--config", write(tmp_path, weak, "w.yaml"), "--out", str(tmp_path / "w")]) == 2
    assert not (tmp_path / "w").exists()
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_simulate_verify_report(tmp_path):
    p = write(tmp_path, SIM_CONFIG)
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", p, "--out", str(out)]) == 0
    names = sorted(f.name for f in out.iterdir())
    assert names == ["demo_manifest.json", "demo_u20.csv", "demo_u50.csv"]
    head = (out / "demo_u20.csv").read_text().splitlines()[0]
    assert head == "replicate,u,tau,Z,O,s1,x1,s2,x2,s3,x3,attempts"
    manifest = json.loads((out / "demo_manifest.json").read_text())
    assert len(manifest["config_sha256"]) == 64
    assert manifest["levels"]["20"]["samples"] == 150
    first = (out / "demo_u50.csv").read_bytes()
    assert cli.main(["simulate", "--config", p, "--out", str(out)]) == 0
    assert (out / "demo_u50.csv").read_bytes() == first
    code = cli.main(["verify", "--config", p, "--out", str(out)])
    report = json.loads((out / "demo_verify.json").read_text())
    assert code == (0 if report["pass"] else 1)
    assert report["tolerances"] == {"O": 0.5, "Z": 0.5, "tau": 0.5}
    assert report["criteria"]["ks_O"]["tolerance"] == 0.5
    assert list(report) == sorted(report)
    assert (out / "demo_distances.csv").exists()
    assert cli.main(["report", "--config", p, "--out", str(out)]) == code
    assert json.loads((out / "demo_report.json").read_text())["pass"] == report["pass"]


def test_verify_exit_one_on_tight_tolerance(tmp_path):
    p = write(tmp_path, SIM_CONFIG.replace("{O: 0.5, Z: 0.5, tau: 0.5}", "{O: 0.0001}"))
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", p, "--out", str(out)]) == 0
    assert cli.main(["verify", "--config", p, "--out", str(out)]) == 1


def test_verify_missing_samples_dir(tmp_path):
    p = write(tmp_path, SIM_CONFIG)
    assert cli.main(["verify", "--config", p, "--out", str(tmp_path), "--samples", str(tmp_path / "nope")]) == 2


def test_workers_do_not_change_output(tmp_path):
    p = write(tmp_path, SIM_CONFIG)
    cli.main(["simulate", "--config", p, "--out", str(tmp_path / "a"), "--workers", "1"])
    cli.main(["simulate", "--config", p, "--out", str(tmp_path / "b"), "--workers", "3"])
    for name in ("demo_u20.csv", "demo_u50.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    p = write(tmp_path, SIM_CONFIG)
    cli.main(["simulate", "--config", p, "--out", str(tmp_path / "a")])
    cli.main(["simulate", "--config", p, "--out", str(tmp_path / "b"), "--seed", "8"])
    assert (tmp_path / "a" / "demo_u20.csv").read_bytes() != (tmp_path / "b" / "demo_u20.csv").read_bytes()


def test_ladder_command(tmp_path):
    p = write(tmp_path, LADDER_CONFIG)
    code = cli.main(["ladder", "--config", p, "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "walk_ladder.json").read_text())
    assert code == (0 if rep["pass"] else 1)
    assert {"vigon_inverse", "vigon_direct_positive", "vigon_direct_negative", "killing_consistency",
            "finite_mean", "renewal_slope", "horizon_diagnostic"} <= set(rep["criteria"])
    assert rep["simultaneous_level"] == pytest.approx(1 - 0.05 / rep["criteria"]["vigon_inverse"]["points"])
    assert (tmp_path / "walk_ladder_grid.csv").read_text().startswith("x,pih_tail")


def test_ladder_needs_section(tmp_path):
    assert cli.main(["ladder", "--config", write(tmp_path, "run_id: x\n"), "--out", str(tmp_path)]) == 2


def test_run_id_cannot_escape_output_dir(tmp_path):
    bad = SIM_CONFIG.replace("run_id: demo", "run_id: ../escape")
    assert cli.main(["simulate", "--config", write(tmp_path, bad), "--out", str(tmp_path / "o")]) == 2
