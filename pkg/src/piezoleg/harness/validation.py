"""Estimator and controller validation runs, and the cost-weight grid search."""

import csv
import math
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from ..controller import CostWeights
from ..gait import GaitParams
from .models import redesign_gains
from .sweep import trial_seed
from .trial import TrialSpec, run_trial

ESTIMATOR_SETTINGS = ("air", "rig_ground", "ground")
CONTROLLER_SETTINGS = ("air", "ground")
VALIDATION_FIELDS = (
    "trial_id", "f_hz", "setting", "repeat", "E_est_swing", "E_est_lift",
    "E_cont_swing", "E_cont_lift", "E_leg_x", "E_leg_z", "nu", "flags",
)


def _params(config, f):
    h = config.harness
    return GaitParams("trot", A_S=config.gait.trot_amplitude, A_L=config.gait.trot_amplitude,
                      T=1.0 / f, S1=h.validation_S1, S2=h.validation_S2)


def validation_specs(config, mode, settings, repeats=None):
    repeats = config.harness.validation_repeats if repeats is None else repeats
    specs = []
    for f in config.harness.validation_freqs:
        for setting in settings:
            for rep in range(repeats):
                i = len(specs)
                specs.append((rep, TrialSpec(i, _params(config, f), mode, setting,
                                             seed=trial_seed(config.seed, i))))
    return specs


def _run(config, bundle, calibration, mode, settings, repeats=None):
    rows = []
    for rep, spec in validation_specs(config, mode, settings, repeats):
        m = run_trial(config, bundle, calibration, spec)
        rows.append({
            "trial_id": spec.trial_id, "f_hz": round(spec.gait.frequency, 9),
            "setting": spec.setting, "repeat": rep,
            "E_est_swing": m.metrics.E_est_swing, "E_est_lift": m.metrics.E_est_lift,
            "E_cont_swing": m.metrics.E_cont_swing, "E_cont_lift": m.metrics.E_cont_lift,
            "E_leg_x": m.metrics.E_leg_x, "E_leg_z": m.metrics.E_leg_z,
            "nu": m.metrics.nu, "flags": "|".join(m.flags),
        })
    return rows


def validate_estimator(config, bundle, calibration, repeats=None):
    """Sinusoid drive, feedback off, in air, against a fixed surface, and walking."""
    return _run(config, bundle, calibration, "estimator_only", ESTIMATOR_SETTINGS, repeats)


def validate_controller(config, bundle, calibration, repeats=None):
    """Closed-loop trot tracking in air and on the ground."""
    return _run(config, bundle, calibration, "closed_loop", CONTROLLER_SETTINGS, repeats)


def mean_by(rows, keys, setting=None):
    """``{f_hz: [mean of each key]}`` averaged over repeats (and settings unless given)."""
    groups = {}
    for r in rows:
        if setting is not None and r["setting"] != setting:
            continue
        groups.setdefault(r["f_hz"], []).append([r[k] for k in keys])
    return {f: np.nanmean(np.array(v, dtype=float), axis=0).tolist()
            for f, v in sorted(groups.items())}


def write_rows(path, rows, fields=VALIDATION_FIELDS):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow(["" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k]
                        for k in fields])


def tune_weights(config, bundle, calibration, k_d=None, k_u=None):
    """Grid search over (k_d, k_u) with k_p = 1.

    Each candidate is scored by the mean worst-axis tracking error of the
    controller validation runs (one repeat).  Candidates that saturate the
    drive lose to any that do not.  Returns ``(best, table)``.
    """
    c = config.controller
    k_d = c.tuning_k_d if k_d is None else k_d
    k_u = c.tuning_k_u if k_u is None else k_u
    table = []
    for kd, ku in product(k_d, k_u):
        weights = CostWeights(1.0, float(kd), float(ku))
        trial_bundle = redesign_gains(bundle, weights)
        cfg = replace(config, controller=replace(c, weights=weights))
        rows = validate_controller(cfg, trial_bundle, calibration, repeats=1)
        errs = [max(r["E_cont_swing"], r["E_cont_lift"]) for r in rows]
        saturated = sum("saturation" in r["flags"] for r in rows)
        score = float(np.mean(errs)) if all(map(math.isfinite, errs)) else math.inf
        table.append({"k_d": float(kd), "k_u": float(ku), "score": score,
                      "max_error": float(np.max(errs)), "saturated": saturated})
    best = min(table, key=lambda t: (t["saturated"] > 0, t["score"]))
    return CostWeights(1.0, best["k_d"], best["k_u"]), table
