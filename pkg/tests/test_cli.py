"""CLI surface: batch runs, byte-identical reproducibility, report rendering, errors."""

import json
from pathlib import Path

import pytest

from gridstream.cli import main

SCENARIO_YAML = """
seed: 42
duration_s: 3.0
radio: {p_base: 0.0, r_reliable_m: 50000.0, d_max_m: 100000.0}
"""

TRACE_CSV = """t_ms,yaw_deg,pitch_deg,x_m,y_m
0,0,0,0,0
2000,20,0,0.5,0.5
"""


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(SCENARIO_YAML)
    return path


@pytest.fixture
def trace_file(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text(TRACE_CSV)
    return path


def test_run_writes_all_artifacts(scenario_file, trace_file, tmp_path, capsys):
    out = tmp_path / "run1"
    rc = main(["run", "--scenario", str(scenario_file), "--trace", str(trace_file),
               "--out", str(out)])
    assert rc == 0
    assert (out / "events.ndjson").exists()
    assert (out / "snapshots.ndjson").exists()
    assert (out / "report.json").exists()
    assert (out / "scenario.yaml").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["frames_captured"] == 90
    assert report["delivery_ratio"] == 1.0
    snaps = (out / "snapshots.ndjson").read_text().splitlines()
    assert len(snaps) == 60  # 3 s at 20 Hz
    assert json.loads(snaps[0])["type"] == "snapshot"
    assert "ratio" in capsys.readouterr().out


def test_identical_inputs_give_byte_identical_outputs(scenario_file, trace_file, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--scenario", str(scenario_file), "--trace", str(trace_file),
                 "--out", str(out1)]) == 0
    assert main(["run", "--scenario", str(scenario_file), "--trace", str(trace_file),
                 "--out", str(out2)]) == 0
    for name in ("events.ndjson", "snapshots.ndjson", "report.json", "scenario.yaml"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_seed_override_changes_outputs(scenario_file, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["run", "--scenario", str(scenario_file), "--out", str(out1)])
    main(["run", "--scenario", str(scenario_file), "--seed", "99", "--out", str(out2)])
    assert "seed: 99" in (out2 / "scenario.yaml").read_text()
    assert (out1 / "scenario.yaml").read_text() != (out2 / "scenario.yaml").read_text()


def test_stationary_run_without_trace_has_empty_m2p(scenario_file, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["motion_to_photon"] == []
    assert report["frames_delivered"] > 0


def test_report_renders_summary_series_and_figures(scenario_file, trace_file, tmp_path, capsys):
    out = tmp_path / "run"
    main(["run", "--scenario", str(scenario_file), "--trace", str(trace_file),
          "--out", str(out)])
    capsys.readouterr()
    rc = main(["report", "--out", str(out)])
    captured = capsys.readouterr().out
    assert rc == 0
    assert "frame delivery ratio" in captured
    for name in ("bitrate.csv", "goodput.csv", "latency.csv", "handovers.csv",
                 "motion_to_photon.csv"):
        assert (out / "series" / name).exists()
    for name in ("bitrate_goodput.png", "latency.png", "map.png"):
        assert (out / "figures" / name).exists()
        assert (out / "figures" / name).stat().st_size > 1000


def test_report_ratio_matches_recomputation(scenario_file, trace_file, tmp_path):
    from gridstream.report import load_stored_report, recompute_from_events

    out = tmp_path / "run"
    main(["run", "--scenario", str(scenario_file), "--trace", str(trace_file),
          "--out", str(out)])
    _, recomputed, _, _ = recompute_from_events(out)
    stored = load_stored_report(out)
    assert recomputed.delivery_ratio == stored["delivery_ratio"]
    assert json.loads(json.dumps(recomputed.to_dict())) == stored


def test_report_missing_artifacts_is_an_error(tmp_path, capsys):
    rc = main(["report", "--out", str(tmp_path / "nope")])
    assert rc != 0


def test_report_corrupt_event_log_names_the_file(scenario_file, tmp_path, capsys):
    out = tmp_path / "run"
    main(["run", "--scenario", str(scenario_file), "--out", str(out)])
    events = out / "events.ndjson"
    events.write_text(events.read_text()[:500] + "{not json}\n")
    capsys.readouterr()
    rc = main(["report", "--out", str(out)])
    assert rc != 0
    err = capsys.readouterr().err
    assert "events.ndjson" in err


def test_invalid_scenario_is_a_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("{seed: 1, grid: {spacing_m: 0}}")
    rc = main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "grid.spacing" in capsys.readouterr().err
