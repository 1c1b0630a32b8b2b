"""Gait grids, parallel sweeps with per-trial checkpoints, and sinusoid baselines.

Layout of one sweep directory::

    records/trial_0007.json   one finished trial (resume checkpoint)
    traces/trial_0007.tsv.gz  its time series
    results.csv               all rows, sorted by trial id
    summary.json              best speed per stride frequency
"""

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import Divergence, MissingBaselineData, PartialFailure
from ..gait import GaitParams
from .calibration import Calibration
from .config import ExperimentConfig
from .models import ModelBundle
from .trial import CSV_FIELDS, TrialSpec, run_trial

GAIT_SHAPES = {"trot": "S2", "pronk": "S3"}
MATCHINGS = ("coupled", "decoupled")


def grid(config, gait):
    """Every gait parameter combination, ordered frequency, then S1, then S2 or S3."""
    if gait not in GAIT_SHAPES:
        raise ValueError(f"unknown gait {gait!r}")
    g = config.gait
    amp = g.trot_amplitude if gait == "trot" else g.pronk_amplitude
    shape = GAIT_SHAPES[gait]
    out = []
    for f in g.freqs:
        for s1 in g.S1:
            for s in getattr(g, shape):
                out.append(GaitParams(gait, A_S=amp, A_L=amp, T=1.0 / f, S1=s1, **{shape: s}))
    return out


def trial_seed(seed, trial_id):
    return int(seed) ^ int(trial_id)


def sweep_specs(config, gait):
    return [
        TrialSpec(i, params, "closed_loop", "ground", seed=trial_seed(config.seed, i))
        for i, params in enumerate(grid(config, gait))
    ]


# ---------------------------------------------------------------------------
# execution

_WORKER = {}


def _init_worker(config_dict, bundle_dict, calibration_dict):
    _WORKER["config"] = ExperimentConfig.from_dict(config_dict)
    _WORKER["bundle"] = ModelBundle.from_dict(bundle_dict)
    _WORKER["calibration"] = Calibration.from_dict(calibration_dict)


def _execute(spec, record_path, trace_path):
    try:
        rec = run_trial(_WORKER["config"], _WORKER["bundle"], _WORKER["calibration"], spec,
                        trace_path=trace_path)
        row = rec.row()
    except Divergence as exc:
        row = failed_row(spec, str(exc))
    tmp = Path(str(record_path) + ".tmp")
    tmp.write_text(json.dumps(row, allow_nan=True))
    tmp.replace(record_path)
    return spec.trial_id


def failed_row(spec, reason=""):
    row = {k: None for k in CSV_FIELDS}
    g = spec.gait
    row.update(trial_id=spec.trial_id, gait=g.base_gait, mode=spec.mode, setting=spec.setting,
               f_hz=round(1.0 / g.T, 9), S1=g.S1,
               S2=None if g.base_gait == "pronk" else g.S2,
               S3=g.S3 if g.base_gait == "pronk" else None,
               flags="divergence")
    return row


@dataclass
class SweepResult:
    directory: Path
    rows: list
    failed: list = field(default_factory=list)

    @property
    def csv_path(self):
        return self.directory / "results.csv"

    def raise_for_failures(self):
        if self.failed:
            raise PartialFailure(f"{len(self.failed)} trial(s) diverged", self.failed)


def run_specs(config, bundle, calibration, specs, directory, workers=1, traces=None):
    """Run trials not yet checkpointed in ``directory`` and assemble the CSV."""
    directory = Path(directory)
    rec_dir = directory / "records"
    trace_dir = directory / "traces"
    rec_dir.mkdir(parents=True, exist_ok=True)
    traces = config.harness.write_traces if traces is None else traces
    if traces:
        trace_dir.mkdir(exist_ok=True)

    todo = []
    for spec in specs:
        rp = rec_dir / f"trial_{spec.trial_id:04d}.json"
        if rp.exists():
            continue
        tp = trace_dir / f"trial_{spec.trial_id:04d}.tsv.gz" if traces else None
        todo.append((spec, rp, tp))

    init = (config.to_dict(), bundle.to_dict(), calibration.to_dict())
    if workers <= 1 or len(todo) <= 1:
        _init_worker(*init)
        for job in todo:
            _execute(*job)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=init) as pool:
            futures = [pool.submit(_execute, *job) for job in todo]
            for fut in futures:
                fut.result()

    rows = [
        json.loads((rec_dir / f"trial_{s.trial_id:04d}.json").read_text()) for s in specs
    ]
    rows.sort(key=lambda r: r["trial_id"])
    write_csv(directory / "results.csv", rows)
    failed = [r["trial_id"] for r in rows if "divergence" in (r["flags"] or "").split("|")]
    return SweepResult(directory, rows, failed)


def run_sweep(config, bundle, calibration, gait, out_dir=None, workers=1):
    """Closed-loop sweep over the full gait grid (100 trials per gait by default)."""
    out_dir = Path(out_dir or config.resolved_out_dir())
    directory = out_dir / f"sweep_{gait}"
    result = run_specs(config, bundle, calibration, sweep_specs(config, gait), directory,
                       workers)
    summary = best_per_frequency(result.rows)
    (directory / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return result


def best_per_frequency(rows, key="nu"):
    """Row with the largest ``key`` at each stride frequency (diverged rows skipped)."""
    best = {}
    for r in rows:
        v = r.get(key)
        if v is None or not math.isfinite(v):
            continue
        f = r["f_hz"]
        if f not in best or v > best[f][key]:
            best[f] = r
    return {str(f): best[f] for f in sorted(best)}


def baseline_specs(config, gait, matching, sweep_rows):
    """One open-loop sinusoid trial per frequency, RMS-matched to the fastest closed-loop trial."""
    if matching not in MATCHINGS:
        raise ValueError(f"unknown matching {matching!r}")
    fastest = best_per_frequency(sweep_rows)
    amp = config.gait.trot_amplitude if gait == "trot" else config.gait.pronk_amplitude
    specs = []
    for i, f in enumerate(config.gait.freqs):
        row = fastest.get(str(round(float(f), 9)))
        if row is None:
            raise MissingBaselineData(f"no finished closed-loop {gait} trial at {f} Hz")
        params = GaitParams(gait, A_S=amp, A_L=amp, T=1.0 / f)
        specs.append(TrialSpec(i, params, f"open_loop_{matching}", "ground",
                               rms=(row["vrms_swing"], row["vrms_lift"]),
                               seed=trial_seed(config.seed, i)))
    return specs


def run_baseline(config, bundle, calibration, gait, matching, out_dir=None, workers=1):
    out_dir = Path(out_dir or config.resolved_out_dir())
    sweep_csv = out_dir / f"sweep_{gait}" / "results.csv"
    if not sweep_csv.exists():
        raise MissingBaselineData(f"{sweep_csv} not found; run the {gait} sweep first")
    specs = baseline_specs(config, gait, matching, read_csv(sweep_csv))
    return run_specs(config, bundle, calibration, specs,
                     out_dir / f"baseline_{gait}_{matching}", workers)


# ---------------------------------------------------------------------------
# CSV

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow([_cell(r.get(k)) for k in CSV_FIELDS])


_TEXT = {"gait", "mode", "setting", "flags"}


def _parse(key, text):
    if key in _TEXT:
        return text
    if text == "":
        return None
    if key == "trial_id":
        return int(text)
    return float(text)


def read_csv(path):
    with open(path, newline="") as fh:
        return [{k: _parse(k, v) for k, v in r.items()} for r in csv.DictReader(fh)]
