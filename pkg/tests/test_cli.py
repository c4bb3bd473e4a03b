import math
from pathlib import Path

import numpy as np
import pytest

from fowtlab.cli import SCENARIO_KEYS, load_scenario, run
from fowtlab.ensemble import load_campaign, load_trajectory, read_manifest

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SHORT = ["--override", "duration=80", "--override", "n_components=16", "--quiet"]


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run(["simulate", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err
    assert run(["explode"]) == 2
    assert run(["simulate", "--override", "no_such_key=1", "--out", str(tmp_path)]) == 2
    assert run(["simulate", "--override", "duration", "--out", str(tmp_path)]) == 2
    assert run(["tune", "--override", "stage=sideways", "--out", str(tmp_path)]) == 2
    assert run(["simulate", "--config", str(tmp_path / "missing.cfg")]) in (2, 4)


def test_help_and_version_exit_0(capsys):
    assert run(["--version"]) == 0
    assert run(["simulate", "--help"]) == 0
    assert "--override" in capsys.readouterr().out


def test_scenario_defaults_and_types(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("beta = 18 deg\nwaves = none\ncontroller = false\nd = 90\n")
    sc = load_scenario(str(cfg), {"duration": "12.5"})
    assert sc["beta"] == pytest.approx(math.radians(18))
    assert sc["waves"] == "none" and sc["controller"] is False
    assert sc["duration"] == 12.5
    assert sc.param_overrides == {"d": "90"}
    assert set(sc.values) == set(SCENARIO_KEYS)


def test_steady_11(tmp_path):
    out = tmp_path / "s11"
    assert run(["simulate", "--config", str(CONFIGS / "steady11.cfg"), "--out", str(out),
                "--quiet"]) == 0
    report = dict(line.split(" = ") for line in (out / "steady_report.txt").read_text().splitlines())
    assert report["converged"] == "true"
    assert float(report["final.rotor_speed_rpm"]) == pytest.approx(12.1, rel=0.05)
    tr = load_trajectory(out / "trajectory.csv")
    assert not tr.failed and tr.t[-1] == 600.0
    man = read_manifest(out / "run.manifest")
    assert man["steady_state"]["converged"] is True


def test_overrides_round_trip_and_replay(tmp_path):
    out = tmp_path / "a"
    assert run(["simulate", "--config", str(CONFIGS / "turbulent.cfg"), "--out", str(out),
                "--override", "wind_seed=5", "--override", "a_p=9.5", *SHORT]) == 0
    man = read_manifest(out / "run.manifest")
    assert man["overrides"]["wind_seed"] == "5" and man["overrides"]["a_p"] == "9.5"
    assert man["parameter_overrides"] == {"a_p": "9.5"}
    assert man["scenario"]["wind_seed"] == 5
    assert "a_p = 9.5" in (out / "parameters.cfg").read_text()
    again = tmp_path / "b"
    assert run(["simulate", "--config", str(out / "replay.cfg"), "--out", str(again),
                "--quiet"]) == 0
    assert load_trajectory(again / "trajectory.csv").identical(load_trajectory(out / "trajectory.csv"))


def test_seed_flag_matches_campaign_run_zero(tmp_path):
    assert run(["simulate", "--seed", "77", "--out", str(tmp_path / "s"), *SHORT]) == 0
    assert run(["campaign", "--seed", "77", "--out", str(tmp_path / "c"),
                "--override", "n_runs=1", *SHORT]) == 0
    single = load_trajectory(tmp_path / "s" / "trajectory.csv")
    camp = load_campaign(tmp_path / "c")
    assert camp.load(0).identical(single)


def test_runtime_failure_exit_3(tmp_path):
    code = run(["simulate", "--out", str(tmp_path), "--quiet",
                "--override", "wind=constant", "--override", "wind_speed=5",
                "--override", "waves=none", "--override", "controller=false",
                "--override", "beta=0 deg", "--override", "torque=5e6",
                "--override", "duration=60"])
    assert code == 3
    tr = load_trajectory(tmp_path / "trajectory.csv")
    assert tr.failure["cause"] == "rotor_reversal"


def test_io_error_exit_4(tmp_path):
    assert run(["simulate", "--out", str(tmp_path / "t"), *SHORT]) == 0
    path = tmp_path / "t" / "trajectory.csv"
    path.write_bytes(path.read_bytes()[:100])
    assert run(["analyze", "--override", f"input={path}", "--out", str(tmp_path / "an"),
                "--quiet"]) == 4


def test_campaign_counterfactual_analyze(tmp_path, monkeypatch):
    camp = tmp_path / "camp"
    monkeypatch.setenv("FOWTLAB_WORKERS", "1")
    assert run(["campaign", "--config", str(CONFIGS / "mc.cfg"), "--out", str(camp),
                "--override", "n_runs=3", *SHORT]) == 0
    res = load_campaign(camp)
    assert len(res.entries) == 3 and res.manifest["base_seed"] == 2024
    assert (camp / "replay.cfg").exists()

    cf = tmp_path / "cf"
    assert run(["counterfactual", "--config", str(CONFIGS / "counterfactual.cfg"),
                "--override", f"campaign={camp}", "--override", "repetitions=2",
                "--out", str(cf), "--quiet"]) == 0
    files = sorted(cf.glob("cf_*.csv"))
    assert len(files) == 2
    src = res.load(0)
    assert np.array_equal(load_trajectory(files[0])["wind_speed"], src["wind_speed"])

    an = tmp_path / "an"
    assert run(["analyze", "--config", str(CONFIGS / "analyze.cfg"),
                "--override", f"input={camp}", "--out", str(an), "--quiet"]) == 0
    names = {f.name for f in an.iterdir()}
    for expected in ("pdf_surge.csv", "extremes_pitch.csv", "bands_heave.csv",
                     "spectrum_wind_speed.csv", "scatter_heave_pitch.csv", "collocation.csv",
                     "events_surge.csv", "run.manifest"):
        assert expected in names
    man = read_manifest(an / "run.manifest")
    assert man["scenario"]["n_bins"] == 50


def test_synth_env(tmp_path):
    assert run(["synth-env", "--out", str(tmp_path), *SHORT]) == 0
    lines = (tmp_path / "wind.csv").read_text().splitlines()
    assert len(lines) - 1 >= 80 / 0.05
    assert (tmp_path / "wave_elevation.csv").exists()
