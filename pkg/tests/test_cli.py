import json

import numpy as np
import pytest

from apqlab import analytic, cli, export
from apqlab.core import SystemSpec

HT = {"classes": [{"arrival_rate": 1 / 3, "accumulation_rate": 3}, {"arrival_rate": 1 / 3, "accumulation_rate": 2},
                  {"arrival_rate": 1 / 3 - 0.001, "accumulation_rate": 1}],
      "horizon": 2000, "seed": 5, "sample_interval": 100}


def write(tmp_path, doc, kind="static", name="s.json"):
    doc = dict(doc)
    doc.setdefault("policy_schedule", [{"start": 0, "policy": {"kind": kind}}])
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def table(path):
    header, rows = export.read_csv(path)
    return header, rows


def test_analyze_static_matches_analytic(tmp_path):
    s = write(tmp_path, HT)
    assert cli.main(["analyze", "--scenario", s, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    header, rows = table(tmp_path / "o" / "analysis.csv")
    assert header == ["class", "arrival_rate", "expected_delay", "expected_sojourn", "expected_queue"]
    ref = analytic.sp_expected_waits(SystemSpec.from_rates([c["arrival_rate"] for c in HT["classes"]]))
    np.testing.assert_array_equal([float(r[3]) for r in rows], ref.expected_sojourn)


def test_analyze_accumulating_adds_limits(tmp_path):
    s = write(tmp_path, HT, "accumulating")
    assert cli.main(["analyze", "--scenario", s, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    header, rows = table(tmp_path / "o" / "analysis.csv")
    assert header[-2:] == ["ht_limit", "ht_queue_fraction"]
    assert float(rows[2][2]) == pytest.approx(1634.727, abs=1e-3)
    assert [float(r[-2]) for r in rows] == pytest.approx([6 / 11, 9 / 11, 18 / 11], rel=1e-12)


def test_malformed_key_names_key(tmp_path, capsys):
    doc = dict(HT, classes=[{"arival_rate": 0.5}])
    s = write(tmp_path, doc)
    assert cli.main(["analyze", "--scenario", s, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "arival_rate" in err and "s.json" in err


def test_bad_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"classes": [}\n')
    assert cli.main(["analyze", "--scenario", str(p), "--out", str(tmp_path)]) == 2
    assert "bad.json:1:" in capsys.readouterr().err


def test_unstable_accumulating_points_to_fluid(tmp_path, capsys):
    doc = dict(HT, classes=[{"arrival_rate": 0.4, "accumulation_rate": r} for r in (3, 2, 1)])
    s = write(tmp_path, doc, "accumulating")
    assert cli.main(["analyze", "--scenario", s, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "unstable" in err and "fluid" in err


def test_validation_errors_exit_2(tmp_path, capsys):
    doc = dict(HT, classes=[{"arrival_rate": 0.1, "accumulation_rate": 1}, {"arrival_rate": 0.1, "accumulation_rate": 2}])
    s = write(tmp_path, doc)
    assert cli.main(["simulate", "--scenario", s, "--out", str(tmp_path)]) == 2
    assert "not strictly decreasing" in capsys.readouterr().err


@pytest.mark.parametrize("args,expected", [
    (["--lam", "2", "--mu", "1", "--cost", "1", "--reward", "5"], ("0.4", "0.8", "5.0", "false")),
    (["--lam", "0.5", "--mu", "1", "--cost", "1", "--reward", "5"], ("1.0", "0.5", "2.0", "false")),
    (["--lam", "1", "--mu", "1", "--cost", "2", "--reward", "1"], ("0.0", "0.0", "1.0", "true")),
])
def test_equilibrium_rows(args, expected, capsys):
    assert cli.main(["equilibrium", *args]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "lambda,mu,C,R,join_probability,effective_rate,equilibrium_wait,counterfactual"
    assert tuple(lines[1].split(",")[4:]) == expected


def test_equilibrium_needs_all_inputs(capsys):
    assert cli.main(["equilibrium", "--lam", "1"]) == 2


def test_fluid_command(tmp_path):
    doc = dict(HT, classes=[{"arrival_rate": 0.4, "accumulation_rate": r} for r in (3, 2, 1)],
               initial_levels=[1, 0, 0], horizon=20, sample_interval=5)
    s = write(tmp_path, doc)
    assert cli.main(["fluid", "--scenario", s, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    header, rows = table(tmp_path / "o" / "fluid_summary.csv")
    assert [float(r[2]) for r in rows[:2]] == pytest.approx([5 / 3, 5.0])
    assert rows[2][2] == "" and float(rows[2][1]) == pytest.approx(0.2)
    header, rows = table(tmp_path / "o" / "fluid_trajectory.csv")
    assert header[0] == "time" and header[-1] == "active_set"


def test_simulate_writes_summary_series_trace(tmp_path):
    s = write(tmp_path, HT, "accumulating")
    out = tmp_path / "o"
    assert cli.main(["simulate", "--scenario", s, "--out", str(out), "--trace", "--quiet"]) == 0
    first = (out / "summary.csv").read_text().splitlines()
    assert first[0].startswith("# scenario=s seed=5")
    header, rows = table(out / "summary.csv")
    assert header == ["class", "mean_delay", "delay_ci", "mean_sojourn", "sojourn_ci", "mean_queue", "count"]
    header, rows = table(out / "series.csv")
    assert header == ["time", "Q_1", "Q_2", "Q_3"] and len(rows) == 21
    header, rows = table(out / "trace.csv")
    assert header == ["time", "event_kind", "class_index", "customer_id"]
    assert {r[1] for r in rows} == {"arrival", "service_start", "departure"}
    # rerun overwrites with identical bytes
    before = (out / "trace.csv").read_bytes()
    assert cli.main(["simulate", "--scenario", s, "--out", str(out), "--trace", "--quiet"]) == 0
    assert (out / "trace.csv").read_bytes() == before


def test_seed_override_changes_output(tmp_path):
    s = write(tmp_path, HT)
    cli.main(["simulate", "--scenario", s, "--out", str(tmp_path / "a"), "--quiet"])
    cli.main(["simulate", "--scenario", s, "--out", str(tmp_path / "b"), "--seed", "6", "--quiet"])
    assert (tmp_path / "a" / "series.csv").read_text() != (tmp_path / "b" / "series.csv").read_text()


def test_simulate_replications(tmp_path):
    s = write(tmp_path, HT)
    assert cli.main(["simulate", "--scenario", s, "--out", str(tmp_path / "o"), "--reps", "3", "--quiet"]) == 0
    _, rows = table(tmp_path / "o" / "replications.csv")
    assert len(rows) == 9
    assert cli.main(["simulate", "--scenario", s, "--out", str(tmp_path / "o"), "--reps", "1"]) == 2


def test_sweep(tmp_path):
    s = write(tmp_path, HT, "accumulating")
    out = tmp_path / "o"
    assert cli.main(["sweep", "--scenario", s, "--out", str(out), "--epsilon", "0.2", "--epsilon", "0.1",
                     "--quiet"]) == 0
    header, rows = table(out / "sweep.csv")
    assert header[:4] == ["epsilon", "eps_delay_1", "eps_delay_2", "eps_delay_3"]
    assert [r[0] for r in rows] == ["0.2", "0.1"]
    assert cli.main(["sweep", "--scenario", s, "--out", str(out), "--epsilon", "0.4"]) == 2


def test_resource_guard_exit_3(tmp_path, capsys):
    s = write(tmp_path, dict(HT, horizon=1e10, sample_interval=1e6))
    assert cli.main(["simulate", "--scenario", s, "--out", str(tmp_path)]) == 3


def test_io_failure_exit_4(tmp_path):
    s = write(tmp_path, HT)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["analyze", "--scenario", s, "--out", str(blocker / "sub"), "--quiet"]) == 4
    assert cli.main(["analyze", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 4


def test_missing_required_flags():
    assert cli.main(["analyze", "--out", "x"]) == 2
    assert cli.main(["figures"]) == 2
