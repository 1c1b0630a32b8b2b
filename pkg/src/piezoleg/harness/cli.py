"""Command-line entry point.

Every subcommand takes ``--config`` (required), ``--seed``, ``--out`` and
``--workers``.  The output directory is ``--out`` if given, else the
``PIEZOLEG_OUT`` environment variable, else the config's ``out_dir``.
Calibration and model files are created on first use.

Exit status: 0 on success, 1 on a runtime failure (a JSON error object is
printed to stderr), 2 on usage errors.
"""

import csv
import functools
import json
import math
import sys
from pathlib import Path

import click

from ..errors import PartialFailure, PiezolegError
from .calibration import Calibration, calibrate
from .config import ExperimentConfig, load_config, save_config
from .models import ModelBundle, identify, stability_report
from .report import REPORT_FIELDS, build_report, format_report
from .sweep import GAIT_SHAPES, MATCHINGS, run_baseline, run_sweep
from .validation import mean_by, tune_weights, validate_controller, validate_estimator, write_rows

CALIBRATION_FILE = "calibration.json"
MODEL_FILE = "model.json"


class Context:
    def __init__(self, config, out_dir, workers):
        self.config = config
        self.out = Path(out_dir)
        self.workers = workers

    def calibration(self):
        path = self.out / CALIBRATION_FILE
        if path.exists():
            return Calibration.load(path)
        cal = calibrate(self.config)
        self.out.mkdir(parents=True, exist_ok=True)
        cal.save(path)
        return cal

    def bundle(self, calibration=None):
        path = self.out / MODEL_FILE
        if path.exists():
            return ModelBundle.load(path)
        bundle = identify(self.config, calibration or self.calibration())
        self.out.mkdir(parents=True, exist_ok=True)
        bundle.save(path)
        return bundle

    def models(self):
        cal = self.calibration()
        return cal, self.bundle(cal)


def _emit(obj):
    click.echo(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return str(v)


def _fail(exc):
    err = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, PartialFailure):
        err["failed_ids"] = list(exc.failed_ids)
    click.echo(json.dumps(err), err=True)
    sys.exit(1)


def experiment(fn):
    """Shared options; builds the Context and maps runtime errors to exit 1."""

    @click.option("--config", "config_path", required=True,
                  type=click.Path(exists=True, dir_okay=False), help="JSON experiment config.")
    @click.option("--seed", type=int, default=None, help="Override the config seed.")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                  help="Output directory.")
    @click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True,
                  help="Parallel worker processes.")
    @functools.wraps(fn)
    def wrapper(config_path, seed, out_dir, workers, **kwargs):
        try:
            config = load_config(config_path).with_overrides(seed=seed)
            out = Path(out_dir) if out_dir else config.resolved_out_dir()
            return fn(Context(config, out, workers), **kwargs)
        except (PiezolegError, OSError, ValueError) as exc:
            _fail(exc)

    return wrapper


@click.group()
@click.version_option(package_name="piezoleg")
def main():
    """Simulated LQG estimation and control of a piezo-actuated quadruped."""


@main.command("init-config")
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, required=True)
def init_config(path, seed):
    """Write a config with every default filled in."""
    save_config(ExperimentConfig(seed=seed), path)
    click.echo(path)


@main.command("calibrate")
@experiment
def calibrate_cmd(ctx):
    """Fit encoder scaling, offsets and noise covariances (overwrites)."""
    cal = calibrate(ctx.config)
    ctx.out.mkdir(parents=True, exist_ok=True)
    cal.save(ctx.out / CALIBRATION_FILE)
    _emit({"calibration": str(ctx.out / CALIBRATION_FILE),
           "alpha": [a.alpha for a in cal.actuators]})


@main.command("identify")
@experiment
def identify_cmd(ctx):
    """Fit process models and derive filter and controller gains (overwrites)."""
    bundle = identify(ctx.config, ctx.calibration())
    bundle.save(ctx.out / MODEL_FILE)
    _emit({"model": str(ctx.out / MODEL_FILE), "legs": stability_report(bundle)})


@main.command("validate-estimator")
@click.option("--repeats", type=click.IntRange(min=1), default=None)
@experiment
def validate_estimator_cmd(ctx, repeats):
    """Estimation error with feedback off, across stride frequencies."""
    cal, bundle = ctx.models()
    rows = validate_estimator(ctx.config, bundle, cal, repeats)
    path = ctx.out / "validation" / "estimator.csv"
    write_rows(path, rows)
    keys = ["E_est_swing", "E_est_lift", "E_leg_x", "E_leg_z"]
    _emit({"csv": str(path), "columns": keys,
           "mean": {s: mean_by(rows, keys, s) for s in sorted({r["setting"] for r in rows})}})


@main.command("validate-controller")
@click.option("--repeats", type=click.IntRange(min=1), default=None)
@experiment
def validate_controller_cmd(ctx, repeats):
    """Tracking error of the closed loop in air and on the ground."""
    cal, bundle = ctx.models()
    rows = validate_controller(ctx.config, bundle, cal, repeats)
    path = ctx.out / "validation" / "controller.csv"
    write_rows(path, rows)
    keys = ["E_cont_swing", "E_cont_lift"]
    _emit({"csv": str(path), "columns": keys,
           "mean": {s: mean_by(rows, keys, s) for s in sorted({r["setting"] for r in rows})}})


@main.command("tune-weights")
@experiment
def tune_weights_cmd(ctx):
    """Grid-search the LQR weights; prints the table and the winner."""
    cal, bundle = ctx.models()
    best, table = tune_weights(ctx.config, bundle, cal)
    _emit({"best": {"k_p": best.k_p, "k_d": best.k_d, "k_u": best.k_u}, "table": table})


@main.command("sweep")
@click.option("--gait", type=click.Choice(sorted(GAIT_SHAPES)), required=True)
@experiment
def sweep_cmd(ctx, gait):
    """Closed-loop trials over the full gait grid (resumable)."""
    cal, bundle = ctx.models()
    result = run_sweep(ctx.config, bundle, cal, gait, ctx.out, ctx.workers)
    _emit({"csv": str(result.csv_path), "trials": len(result.rows), "failed": result.failed})
    result.raise_for_failures()


@main.command("baseline")
@click.option("--matching", type=click.Choice(MATCHINGS), required=True)
@click.option("--gait", type=click.Choice(sorted(GAIT_SHAPES)), default="trot",
              show_default=True)
@experiment
def baseline_cmd(ctx, matching, gait):
    """Open-loop sinusoids RMS-matched to the fastest sweep trial per frequency."""
    cal, bundle = ctx.models()
    result = run_baseline(ctx.config, bundle, cal, gait, matching, ctx.out, ctx.workers)
    _emit({"csv": str(result.csv_path), "trials": len(result.rows), "failed": result.failed})
    result.raise_for_failures()


@main.command("report")
@click.argument("extra_dirs", nargs=-1, type=click.Path(exists=True, file_okay=False))
@experiment
def report_cmd(ctx, extra_dirs):
    """Best speed, step effectiveness and economy per frequency; averages over directories."""
    rows = build_report([ctx.out, *map(Path, extra_dirs)])
    if not rows:
        raise FileNotFoundError(f"no sweep or baseline results under {ctx.out}")
    ctx.out.mkdir(parents=True, exist_ok=True)
    path = ctx.out / "report.csv"
    write_csv_rows(path, rows)
    click.echo(format_report(rows))
    click.echo(f"\nwritten: {path}")


def write_csv_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
