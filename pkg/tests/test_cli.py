import json

import pytest

from conelab.cli import main
from conelab.scenarios import SCENARIOS, ConfigError, ExperimentConfig


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


L2 = {"scenario": "l2-identities", "manifold": {"kind": "grid", "d": 2, "side": 5},
      "potential": {"kind": "random"}, "seed": 3, "params": {"engine_fields": 2}}


def test_l2_run_and_determinism(tmp_path):
    cfg = write(tmp_path, L2)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "summary.json").read_bytes()
    assert a == (tmp_path / "b" / "summary.json").read_bytes()
    doc = json.loads(a)
    assert doc["scenario"] == "l2-identities" and doc["seed"] == 3
    for c in doc["criteria"]:
        assert set(c) >= {"name", "paper_anchor", "measured", "threshold", "pass"}
        assert c["paper_anchor"]
        assert c["pass"]
    assert (tmp_path / "a" / "tables" / "l2_ratios.csv").exists()


def test_unknown_scenario(tmp_path, capsys):
    cfg = write(tmp_path, {"scenario": "nope"})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    rec = json.loads((tmp_path / "o" / "error.json").read_text())
    assert rec["error"] == "config" and rec["exit_code"] == 2


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", write(tmp_path, dict(L2, extra=1)),
                 "--out", str(tmp_path / "o")]) == 2


def test_invalid_manifold(tmp_path):
    mf = tmp_path / "m.json"
    mf.write_text(json.dumps({"vertices": [{"id": 0}, {"id": 1}, {"id": 2}],
                              "edges": [{"u": 0, "v": 1}]}))
    cfg = write(tmp_path, dict(L2, manifold={"kind": "from_file", "path": str(mf)}))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_numerical_guard(tmp_path):
    pot = {"kind": "arrays", "vplus": [0.0] * 25, "vminus": [1.0] * 25}
    cfg = write(tmp_path, dict(L2, potential=pot))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    rec = json.loads((tmp_path / "o" / "error.json").read_text())
    assert rec["type"] == "IndefiniteOperatorError"


def test_failed_criterion_exit(tmp_path):
    cfg = write(tmp_path, {"scenario": "doubling-fit",
                           "manifold": {"kind": "grid", "d": 2, "side": 17},
                           "params": {"r_min": 2.0, "r_max": 6.0, "N_range": [5.0, 6.0]}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_plot_tables(tmp_path):
    cfg = write(tmp_path, {"scenario": "davies-gaffney",
                           "manifold": {"kind": "grid", "d": 2, "side": 7},
                           "params": {"gap": 4}})
    main(["run", "--config", cfg, "--out", str(tmp_path / "o")])
    head = (tmp_path / "o" / "tables" / "dg_gradient_plot.csv").read_text().splitlines()[0]
    assert head == "x,y,series"


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenario": "l2-identities", "engine": "magic"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenario": "l2-identities", "p_list": [0.5]})
    assert len(SCENARIOS) == 14
