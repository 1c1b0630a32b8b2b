import dataclasses
import json
import math

import numpy as np
import pytest
from click.testing import CliRunner
from hypothesis import given, settings
from hypothesis import strategies as st

from piezoleg.errors import MissingBaselineData, ParamOutOfRange, PartialFailure
from piezoleg.gait import GaitParams
from piezoleg.harness import sweep as sweep_mod
from piezoleg.harness.calibration import calibrate
from piezoleg.harness.cli import main
from piezoleg.harness.config import OUT_ENV, ExperimentConfig, load_config, save_config
from piezoleg.harness.report import build_report
from piezoleg.harness.sweep import (SweepResult, failed_row, read_csv, run_baseline, run_sweep,
                                    trial_seed, write_csv)
from piezoleg.harness.trial import CSV_FIELDS, TrialSpec, read_trace, run_trial, trace_columns
from piezoleg.harness.validation import mean_by, validate_estimator


def silent(config):
    p = dataclasses.replace(config.plant, process_noise_std=0.0)
    s = dataclasses.replace(config.sensor, noise_std_vm=0.0, noise_std_v=0.0)
    return dataclasses.replace(config, plant=p, sensor=s)


# -- config ----------------------------------------------------------------

def test_config_round_trip(tmp_path, config):
    cfg = dataclasses.replace(config, gait=dataclasses.replace(config.gait, trot_amplitude=0.1 + 0.2))
    path = tmp_path / "c.json"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg
    assert back.gait.trot_amplitude == 0.1 + 0.2


def test_config_needs_seed():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({})


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"seed": 1, "plnat": {}})


def test_config_rejects_off_table_grid():
    with pytest.raises(ParamOutOfRange):
        ExperimentConfig.from_dict({"seed": 1, "gait": {"S1": [45]}})


def test_output_dir_override(monkeypatch, config):
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert str(config.resolved_out_dir()) == "out"
    monkeypatch.setenv(OUT_ENV, "/tmp/elsewhere")
    assert str(config.resolved_out_dir()) == "/tmp/elsewhere"


# -- calibration -----------------------------------------------------------

def test_calibrated_scaling(config, calibration):
    for true, act in zip(config.sensor.alpha_true, calibration.actuators):
        assert act.alpha == pytest.approx(true, rel=0.01)


def test_recovered_offsets(config, calibration):
    n = config.calibration.zero_input_ticks
    for act in calibration.actuators:
        assert abs(act.offset_vm - config.sensor.offset_vm) < 5 * config.sensor.noise_std_vm / math.sqrt(n) + 1e-3
        assert abs(act.offset_v - config.sensor.offset_v) < 5 * config.sensor.noise_std_v / math.sqrt(n)


def test_noise_free_covariances(config):
    cal = calibrate(silent(config))
    for act in cal.actuators:
        assert np.abs(act.N_H).max() < 1e-12
        assert np.abs(act.N_D).max() < 1e-12


def test_calibration_file_round_trip(tmp_path, calibration, bundle):
    from piezoleg.harness.calibration import Calibration
    from piezoleg.harness.models import ModelBundle
    calibration.save(tmp_path / "cal.json")
    bundle.save(tmp_path / "model.json")
    assert Calibration.load(tmp_path / "cal.json") == calibration
    back = ModelBundle.load(tmp_path / "model.json")
    for a, b in zip(back.legs, bundle.legs):
        np.testing.assert_array_equal(a.K, b.K)
        np.testing.assert_array_equal(a.process.A_p, b.process.A_p)


# -- trials ----------------------------------------------------------------

def test_estimator_only_in_air(config, bundle, calibration):
    spec = TrialSpec(0, GaitParams("trot", T=0.1), "estimator_only", "air", seed=3)
    rec = run_trial(config, bundle, calibration, spec)
    assert rec.metrics.E_est_swing < 0.16 and rec.metrics.E_est_lift < 0.16


def test_closed_loop_smoke(config, bundle, calibration, tmp_path):
    spec = TrialSpec(1, GaitParams("trot", T=1 / 30, S1=70.0, S2=25.0), seed=trial_seed(7, 1))
    trace = tmp_path / "t.tsv.gz"
    rec = run_trial(config, bundle, calibration, spec, trace_path=trace)
    row = rec.row()
    assert math.isfinite(row["nu"]) and math.isfinite(row["sigma"])
    assert isinstance(row["flags"], str)
    header, data = read_trace(trace)
    assert header == trace_columns()
    assert data.shape == (config.harness.strides * round(1 / 30 / config.harness.dt), len(header))


def test_trials_are_deterministic(config, bundle, calibration):
    spec = TrialSpec(2, GaitParams("trot", T=0.05, S1=60.0), seed=9)
    a = run_trial(config, bundle, calibration, spec).row()
    b = run_trial(config, bundle, calibration, spec).row()
    assert json.dumps(a) == json.dumps(b)


def test_leg_error_exceeds_actuator_error_in_contact(config, bundle, calibration):
    cfg = dataclasses.replace(config, harness=dataclasses.replace(
        config.harness, validation_freqs=(20.0, 40.0)))
    rows = validate_estimator(cfg, bundle, calibration, repeats=1)
    for r in rows:
        if r["setting"] != "air":
            assert r["E_leg_z"] > r["E_est_lift"]
    means = mean_by(rows, ["E_leg_z"], "ground")
    assert set(means) == {20.0, 40.0}


# -- sweeps ----------------------------------------------------------------

def test_serial_and_parallel_sweeps_match(small_config, bundle, calibration, tmp_path):
    a = run_sweep(small_config, bundle, calibration, "trot", tmp_path / "a", workers=1)
    b = run_sweep(small_config, bundle, calibration, "trot", tmp_path / "b", workers=3)
    assert len(a.rows) == 8
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
    assert len(list((tmp_path / "a" / "sweep_trot" / "traces").iterdir())) == 8
    summary = json.loads((tmp_path / "a" / "sweep_trot" / "summary.json").read_text())
    assert set(summary) == {"30.0", "50.0"}


def test_sweep_resumes(small_config, bundle, calibration, tmp_path, monkeypatch):
    first = run_sweep(small_config, bundle, calibration, "pronk", tmp_path, workers=1)
    original = first.csv_path.read_bytes()
    records = tmp_path / "sweep_pronk" / "records"
    for tid in (1, 3):
        (records / f"trial_{tid:04d}.json").unlink()
    first.csv_path.unlink()
    ran = []
    real = sweep_mod._execute
    monkeypatch.setattr(sweep_mod, "_execute", lambda spec, *a: ran.append(spec.trial_id) or real(spec, *a))
    again = run_sweep(small_config, bundle, calibration, "pronk", tmp_path, workers=1)
    assert sorted(ran) == [1, 3]
    assert again.csv_path.read_bytes() == original


def test_baseline_and_report(small_config, bundle, calibration, tmp_path):
    with pytest.raises(MissingBaselineData):
        run_baseline(small_config, bundle, calibration, "trot", "coupled", tmp_path)
    run_sweep(small_config, bundle, calibration, "trot", tmp_path)
    base = run_baseline(small_config, bundle, calibration, "trot", "coupled", tmp_path)
    assert [r["mode"] for r in base.rows] == ["open_loop_coupled"] * 2
    sweep_rows = read_csv(tmp_path / "sweep_trot" / "results.csv")
    fastest = max((r for r in sweep_rows if r["f_hz"] == 30.0), key=lambda r: r["nu"])
    assert fastest["vrms_swing"] > 0
    report = build_report([tmp_path])
    assert {(r["source"], r["f_hz"]) for r in report} == {
        (s, f) for s in ("closed_loop", "coupled_sine") for f in (30.0, 50.0)}


def test_partial_failure():
    spec = TrialSpec(4, GaitParams("trot", T=0.05), seed=1)
    row = failed_row(spec)
    assert row["flags"] == "divergence" and row["nu"] is None
    result = SweepResult(None, [row], [4])
    with pytest.raises(PartialFailure) as err:
        result.raise_for_failures()
    assert list(err.value.failed_ids) == [4]


floats = st.one_of(st.floats(allow_nan=True, allow_infinity=True), st.none())


@settings(max_examples=50, deadline=None)
@given(values=st.lists(floats, min_size=len(CSV_FIELDS), max_size=len(CSV_FIELDS)),
       tid=st.integers(0, 9999), flags=st.sampled_from(["", "saturation", "backward|flat_reference"]))
def test_csv_round_trip(tmp_path_factory, values, tid, flags):
    row = dict(zip(CSV_FIELDS, values))
    row.update(trial_id=tid, gait="trot", mode="closed_loop", setting="ground", flags=flags)
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    write_csv(path, [row])
    (back,) = read_csv(path)
    for k in CSV_FIELDS:
        a, b = row[k], back[k]
        if isinstance(a, float) and math.isnan(a):
            assert math.isnan(b)
        else:
            assert a == b and type(a) is type(b)


# -- command line ----------------------------------------------------------

def test_cli_missing_config(tmp_path):
    res = CliRunner().invoke(main, ["calibrate", "--config", str(tmp_path / "nope.json")])
    assert res.exit_code == 2


def test_cli_runtime_error_is_json(tmp_path):
    runner = CliRunner()
    cfg = tmp_path / "c.json"
    assert runner.invoke(main, ["init-config", str(cfg), "--seed", "7"]).exit_code == 0
    res = runner.invoke(main, ["report", "--config", str(cfg), "--out", str(tmp_path / "empty")])
    assert res.exit_code == 1
    err = json.loads(res.stderr if hasattr(res, "stderr") else res.output)
    assert err["error"] == "FileNotFoundError"


def test_cli_sweep_and_report(small_config, calibration, bundle, tmp_path):
    cfg = tmp_path / "c.json"
    save_config(small_config, cfg)
    out = tmp_path / "out"
    out.mkdir()
    calibration.save(out / "calibration.json")
    bundle.save(out / "model.json")
    runner = CliRunner()
    res = runner.invoke(main, ["sweep", "--gait", "trot", "--config", str(cfg), "--seed", "7",
                               "--out", str(out), "--workers", "2"])
    assert res.exit_code == 0, res.output
    assert len(read_csv(out / "sweep_trot" / "results.csv")) == 8
    assert len(list((out / "sweep_trot" / "traces").glob("*.tsv.gz"))) == 8
    res = runner.invoke(main, ["baseline", "--matching", "decoupled", "--config", str(cfg),
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    res = runner.invoke(main, ["report", "--config", str(cfg), "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert (out / "report.csv").exists() and "decoupled_sine" in res.output
