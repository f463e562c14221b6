import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from slimnav.cli import main
from slimnav.config import ExperimentConfig, from_json, load_config, preset
from slimnav.errors import ConfigError
from slimnav.policy import ActionSpace, PolicyConfig, QNet, save_policy

# produced by each stage checked for byte-level reproducibility
DETERMINISTIC = {
    "gen-world": ["config.json", "world.npz", "world.json", "validation.json", "test.json", "world_summary.json"],
    "collect-mde-data": ["mde_data.npz", "mde_data.json"],
    "train-mde": ["mde.npz", "mde_report.json", "mde_history.csv"],
    "train-policy": ["policy_adaptive.npz", "policy_static-64.npz", "curve_adaptive.csv", "curve_static-64.csv"],
    "eval": ["eval.json", "eval_episodes.csv", "traces_adaptive.json", "traces_static-64.json"],
    "analyze": ["analysis.json", "heatmap_all.csv", "heatmap_all.pgm"],
}


def test_pipeline_bitwise_reproducible(pipeline_runs):
    _, a, b = pipeline_runs
    for stage, files in DETERMINISTIC.items():
        for f in files:
            assert (a / f).read_bytes() == (b / f).read_bytes(), f"{stage}: {f} differs"


def test_pipeline_outputs_complete(pipeline_runs):
    _, a, _ = pipeline_runs
    for f in ("r2.png", "curve_adaptive.png", "pareto.png", "heatmap_all.png", "bench.csv", "bench.json"):
        assert (a / f).stat().st_size > 0
    report = json.loads((a / "eval.json").read_text())
    assert set(report["metrics"]) == {"adaptive", "static-64"}
    assert set(report["deltas"]["static-64"]) >= {"energy_decrease_pct", "accuracy_gain_abs_pp",
                                                   "accuracy_gain_rel_pct", "acquisitions_decrease_pct"}
    analysis = json.loads((a / "analysis.json").read_text())
    assert "saturation" in analysis and "correlations" in analysis


def test_analyze_rerun_identical(pipeline_runs, tmp_path):
    cfg, a, _ = pipeline_runs
    before = (a / "analysis.json").read_bytes()
    assert main(["analyze", "--config", str(cfg), "--out", str(a)]) == 0
    assert (a / "analysis.json").read_bytes() == before


def test_bench_reproduces_profile(tmp_path):
    assert main(["bench", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "bench.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["table"] == "profile"]
    from slimnav.energy import DEFAULT_PROFILE_CSV
    table = list(csv.DictReader(DEFAULT_PROFILE_CSV.splitlines()))
    assert [(float(r["size"]), float(r["power_mw"]), float(r["latency_ms"]), float(r["energy_mj"])) for r in rows] \
        == [(float(r["size"]), float(r["power_mw"]), float(r["latency_ms"]), float(r["energy_mj"])) for r in table]


def test_eval_untrained_policy_full_report(pipeline_runs, tmp_path):
    cfg_path, a, _ = pipeline_runs
    out = tmp_path / "run"
    out.mkdir()
    for f in ("config.json", "world.npz", "world.json", "validation.json", "test.json", "mde.npz",
              "mde_report.json", "mde_data.json"):
        (out / f).write_bytes((a / f).read_bytes())
    cfg = load_config(cfg_path)
    pcfg = PolicyConfig.from_json(cfg.policy.to_json())
    space = pcfg.space()
    save_policy(out / "policy_adaptive.npz", QNet(3 * 37, len(space), pcfg.hidden, np.random.default_rng(0)),
                space, pcfg, cfg.hash())
    assert main(["eval", "--config", str(cfg_path), "--out", str(out)]) == 0
    report = json.loads((out / "eval.json").read_text())
    assert report["metrics"]["adaptive"]["episodes"] == report["test_episodes"]


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["gen-world", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    (tmp_path / "bad.json").write_text('{"policy": {"episodez": 3}}')
    assert main(["show-config", "--config", str(tmp_path / "bad.json")]) == 1
    (tmp_path / "bad2.json").write_text("{not json")
    assert main(["show-config", "--config", str(tmp_path / "bad2.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    assert main(["show-config", "--workers", "0"]) == 1


def test_missing_artifacts_exit_2(tmp_path):
    assert main(["train-mde", "--out", str(tmp_path)]) == 2
    assert main(["eval", "--out", str(tmp_path / "nowhere")]) == 2


def test_mismatched_config_exit_2(pipeline_runs, tmp_path):
    cfg_path, a, _ = pipeline_runs
    other = json.loads(cfg_path.read_text())
    other["seed"] = 4
    p = tmp_path / "other.json"
    p.write_text(json.dumps(other))
    assert main(["train-mde", "--config", str(p), "--out", str(a)]) == 2


def test_show_config_and_module_entry():
    out = subprocess.run([sys.executable, "-m", "slimnav", "show-config", "--preset", "paper-scale"],
                         capture_output=True, text=True, check=True)
    doc = json.loads(out.stdout)
    assert doc["config"]["policy"]["episodes"] == 2_000_000 and len(doc["config_hash"]) == 64


def test_config_roundtrip_and_hash():
    for name in ("desk", "paper-scale"):
        cfg = preset(name)
        back = from_json(json.loads(cfg.dumps()))
        assert back == cfg and back.hash() == cfg.hash()
    assert preset("desk").with_seed(1).hash() != preset("desk").hash()
    assert preset("desk").stage_seed("policy") == 4


def test_config_validation():
    with pytest.raises(ConfigError):
        preset("nope")
    with pytest.raises(ConfigError):
        from_json({"policy": {"gates": [0.0, 0.3]}})
    with pytest.raises(ConfigError):
        from_json({"policy": {"task": {"alpha": 32}}})
    with pytest.raises(ConfigError):
        from_json({"format_version": 9})
    assert isinstance(from_json({"seed": 5}), ExperimentConfig)
