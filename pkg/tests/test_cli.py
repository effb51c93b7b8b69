import json
import shutil

import pytest

from vapbench.cli import EXIT_CALIBRATION, EXIT_CAMPAIGN, EXIT_CONFIG, EXIT_OK, main
from vapbench.report import PROVENANCE_TAGS
from vapbench.workloads.scenario import DATA_DIR


def run(tmp_path, *argv, out="out"):
    try:
        return main([*argv, "--out", str(tmp_path / out)])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def load_json(path):
    return json.loads((path / "report.json").read_text())


def numeric_cells(doc):
    """Every numeric cell outside the row-key (first) column."""
    for table in doc["tables"]:
        for row in table["rows"]:
            for col in table["columns"][1:]:
                yield col, row[col]


@pytest.fixture
def shipped(tmp_path):
    """A private copy of the shipped av files, for editing."""
    d = tmp_path / "cfg"
    shutil.copytree(DATA_DIR, d)
    return d


def test_calibrate_ok(tmp_path, capsys):
    assert run(tmp_path, "calibrate") == EXIT_OK
    text = (tmp_path / "out" / "calibration.md").read_text()
    assert "battery_kj" in text
    assert capsys.readouterr().out == text


def test_calibrate_explain(tmp_path):
    assert run(tmp_path, "calibrate", "--explain") == EXIT_OK
    assert "E_d =" in (tmp_path / "out" / "calibration.md").read_text()


def test_calibrate_perturbed_battery_exits_3(tmp_path, shipped):
    conf = shipped / "models.conf"
    conf.write_text(conf.read_text().replace("battery_kj = 337.7", "battery_kj = 300.0"))
    assert run(tmp_path, "calibrate", "--config", str(shipped / "av.config")) == EXIT_CALIBRATION


def test_config_errors_exit_1(tmp_path, shipped):
    assert run(tmp_path, "protect", "--scheme", "tmr", "--trials", "0") == EXIT_CONFIG
    assert run(tmp_path, "calibrate", "--config", str(tmp_path / "missing.config")) == EXIT_CONFIG
    assert run(tmp_path, "sweep", "--param", "speed", "--values", "1") == EXIT_CONFIG
    assert run(tmp_path, "sweep", "--param", "payload", "--values", "1") == EXIT_CONFIG  # av has no payload
    assert run(tmp_path, "protect", "--format", "xml", "--trials", "0") == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["explode"])
    assert exc.value.code == EXIT_CONFIG
    cfg = shipped / "av.config"
    cfg.write_text(cfg.read_text() + "colour = red\n")
    assert run(tmp_path, "calibrate", "--config", str(cfg)) == EXIT_CONFIG


def test_unknown_target_is_a_config_error(tmp_path, shipped):
    camp = shipped / "av.campaign"
    camp.write_text(camp.read_text().replace("targets = all", "targets = warp_drive"))
    assert run(tmp_path, "characterize", "--config", str(shipped / "av.config"), "--trials", "5") == EXIT_CONFIG


def test_campaign_failure_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("VAPBENCH_THREADS", "many")
    assert run(tmp_path, "protect", "--scheme", "none", "--trials", "5") == EXIT_CAMPAIGN


def test_outputs_are_byte_identical(tmp_path):
    args = ("protect", "--scheme", "none,vap", "--trials", "60", "--seed", "11")
    assert run(tmp_path, *args, out="a") == EXIT_OK
    assert run(tmp_path, *args, out="b") == EXIT_OK
    for name in ("report.csv", "report.json", "report.md"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_is_recorded(tmp_path):
    run(tmp_path, "protect", "--scheme", "none", "--trials", "0", "--seed", "77")
    assert load_json(tmp_path / "out")["seed"] == 77


@pytest.mark.parametrize("argv", [
    ("protect", "--trials", "30"),
    ("protect", "--config", "drone", "--trials", "30"),
    ("characterize", "--trials", "30"),
    ("sweep", "--param", "power", "--values", "0.1,0.3"),
    ("sweep", "--config", "drone", "--param", "payload", "--values", "0,1"),
])
def test_provenance_completeness(tmp_path, argv):
    assert run(tmp_path, *argv) == EXIT_OK
    for col, cell in numeric_cells(load_json(tmp_path / "out")):
        if isinstance(cell, dict):
            assert cell["provenance"] in PROVENANCE_TAGS, col
            assert cell["source"], col
        else:
            assert not isinstance(cell, (int, float)) or isinstance(cell, bool), f"untagged number in {col}"


def test_zero_trials_marks_epr_absent(tmp_path):
    assert run(tmp_path, "protect", "--scheme", "none", "--trials", "0") == EXIT_OK
    doc = load_json(tmp_path / "out")
    row = doc["tables"][0]["rows"][0]
    assert row["epr_pct"]["value"] is None
    assert row["latency_ms"]["value"] == 164.0
    assert row["distance_m"]["value"] == pytest.approx(5.00, abs=0.01)
    assert "| absent |" in (tmp_path / "out" / "report.md").read_text()


def test_one_trial_warns(tmp_path, capsys):
    assert run(tmp_path, "characterize", "--trials", "1") == EXIT_OK
    assert "warning:" in capsys.readouterr().err
    assert load_json(tmp_path / "out")["warnings"]


def test_csv_shape(tmp_path):
    run(tmp_path, "protect", "--scheme", "none,vap", "--trials", "0")
    lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert lines[0].startswith("scheme,latency_ms,distance_m")
    assert [l.split(",")[0] for l in lines[1:]] == ["none", "vap"]


def test_power_sweep_decreasing(tmp_path):
    run(tmp_path, "sweep", "--param", "power", "--values", "0.1,0.2,0.3,0.4,0.5")
    col = [c["value"] for c in (r["driving_time_h"] for r in load_json(tmp_path / "out")["tables"][0]["rows"])]
    assert all(a > b for a, b in zip(col, col[1:]))


def test_latency_sweep_increasing(tmp_path):
    run(tmp_path, "sweep", "--param", "latency", "--values", "100,164,245,610")
    col = [r["distance_m"]["value"] for r in load_json(tmp_path / "out")["tables"][0]["rows"]]
    assert all(a < b for a, b in zip(col, col[1:]))


def test_theta_sweep_weakly_decreasing(tmp_path):
    thetas = "0,10,20,40,60,80,100"
    assert run(tmp_path, "sweep", "--param", "vap.theta", "--values", thetas, "--trials", "900") == EXIT_OK
    rows = load_json(tmp_path / "out")["tables"][0]["rows"]
    counts = [r["hardware_nodes"]["value"] for r in rows]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[0] > counts[-1]


def test_sigma_k_sweep_runs(tmp_path):
    assert run(tmp_path, "sweep", "--param", "sigma_k", "--values", "2,4", "--trials", "40") == EXIT_OK
    rows = load_json(tmp_path / "out")["tables"][0]["rows"]
    assert len(rows) == 2 and all(r["epr_pct"]["value"] is not None for r in rows)
