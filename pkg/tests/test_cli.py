import hashlib
import json
from pathlib import Path

import pytest
import yaml

from pullback_lab import cli
from pullback_lab.process_core import IntegrationBlowup
from pullback_lab.wave_model import benchmark_spec

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_simulate_config(tmp_path, **section):
    body = {
        "command": "simulate",
        "model": benchmark_spec(n_modes=8).to_dict(),
        "seed": 3,
        "simulate": {"n_traj": 2, "horizon": 1.0, "csv_every": 50, **section},
    }
    path = tmp_path / "sim.yaml"
    path.write_text(yaml.safe_dump(body))
    return path


@pytest.mark.parametrize("name, code", [
    ("validate_benchmark", 0),
    ("validate_h3_fail", 3),
    ("validate_h4_fail", 3),
    ("validate_h6_fail", 3),
    ("cstar_exp", 4),
    ("cstar_poly", 0),
])
def test_shipped_configs_exit_codes(tmp_path, name, code):
    command = yaml.safe_load((CONFIGS / f"{name}.yaml").read_text())["command"]
    assert cli.main([command, "--config", str(CONFIGS / f"{name}.yaml"), "--out", str(tmp_path)]) == code


def test_hypothesis_failure_report(tmp_path, capsys):
    cli.main(["validate", "--config", str(CONFIGS / "validate_h4_fail.yaml"), "--out", str(tmp_path)])
    report = json.loads((tmp_path / "hypothesis_report.json").read_text())
    assert not report["passed"]
    assert report["statuses"]["H4_slope"]["witness"] is not None
    assert "H4_slope" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["simulate"],
    ["nonsense", "--config", "x.yaml"],
    ["simulate", "--config", "missing.yaml"],
    ["simulate", "--config", "{cfg}", "--seed", "abc"],
])
def test_parse_errors(tmp_path, argv):
    cfg = small_simulate_config(tmp_path)
    argv = [a.replace("{cfg}", str(cfg)) for a in argv]
    assert cli.main(argv) == 2


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(colour="red"),
    lambda d: d["simulate"].update(bogus=1),
    lambda d: d.update(command="kappa"),
    lambda d: d["model"].update(f="v ** "),
    lambda d: d.pop("model"),
])
def test_bad_configs_exit_2(tmp_path, mutate):
    path = small_simulate_config(tmp_path)
    body = yaml.safe_load(path.read_text())
    mutate(body)
    path.write_text(yaml.safe_dump(body))
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_invalid_yaml_exit_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("command: [simulate\n")
    assert cli.main(["simulate", "--config", str(path)]) == 2


def test_blowup_exit_5(tmp_path, monkeypatch):
    def explode(cfg, w, ledger):
        raise IntegrationBlowup("boom", 1.0, [0])
    monkeypatch.setitem(cli.RUNNERS, "simulate", explode)
    path = small_simulate_config(tmp_path)
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 5


def test_simulate_is_deterministic_and_manifested(tmp_path):
    path = small_simulate_config(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    csvs = sorted(p.name for p in outs[0].glob("*.csv"))
    assert "simulate_summary.csv" in csvs and "trajectory_0.csv" in csvs
    for name in csvs:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        manifest = json.loads((outs[0] / f"{name}.manifest.json").read_text())
        assert manifest["sha256"] == hashlib.sha256((outs[0] / name).read_bytes()).hexdigest()
        assert manifest["config_sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
        assert manifest["seed"] == 3 and manifest["command"] == "simulate"
        assert manifest["model_sha256"] == benchmark_spec(n_modes=8).digest()
    header = (outs[0] / "trajectory_0.csv").read_text().splitlines()[0]
    assert header == "t,norm_H1,norm_vt,E,V"


def test_seed_override_changes_output(tmp_path):
    path = small_simulate_config(tmp_path)
    cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "a")])
    cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "b"), "--seed", "4"])
    a = (tmp_path / "a" / "trajectory_0.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory_0.csv").read_bytes()
    assert a != b
    assert json.loads((tmp_path / "b" / "trajectory_0.csv.manifest.json").read_text())["seed"] == 4


def test_validate_writes_ledger(tmp_path):
    cli.main(["validate", "--config", str(CONFIGS / "validate_benchmark.yaml"), "--out", str(tmp_path)])
    text = (tmp_path / "ledger.txt").read_text()
    assert "eps1" in text and "r0_sq" in text
