"""Model identification and the model file (process models, filters, gains)."""

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..controller import ControlLaw, build_cost, compute_lqr_gain
from ..estimator import (AugmentedSystem, build_augmented_system, compute_kalman_gain,
                         estimator_spectral_radius)
from ..plant import N_LEGS
from ..riccati import spectral_radius
from ..sensor import build_measurement_model
from ..sysid import (ProcessModel, ResponseDataset, design_excitation, fit_linear_model,
                     prediction_error)
from .rig import Rig
from .simulate import C_Q, C_VCMD


@dataclass(frozen=True)
class LegModel:
    process: ProcessModel
    system: AugmentedSystem
    K: np.ndarray  # 6x4
    L: np.ndarray  # 2x4
    holdout_error: float  # one-step normalized prediction error on fresh data

    def control_law(self, v_min=-np.inf, v_max=np.inf):
        return ControlLaw(self.L, self.process.u0, np.zeros((0, 2)), v_min, v_max)

    def to_dict(self):
        return {"process": self.process.to_dict(), "system": self.system.to_dict(),
                "K": self.K.tolist(), "L": self.L.tolist(),
                "holdout_error": self.holdout_error}

    @classmethod
    def from_dict(cls, d):
        return cls(ProcessModel.from_dict(d["process"]), AugmentedSystem.from_dict(d["system"]),
                   np.array(d["K"], float), np.array(d["L"], float), float(d["holdout_error"]))


@dataclass(frozen=True)
class ModelBundle:
    legs: tuple  # four LegModel, FL FR RL RR
    seed: int

    def filter_arrays(self, feedback=True):
        sys = [m.system for m in self.legs]
        return {
            "A": np.stack([s.A for s in sys]), "B": np.stack([s.B for s in sys]),
            "H": np.stack([s.H for s in sys]), "D": np.stack([s.D for s in sys]),
            "K": np.stack([m.K for m in self.legs]), "x0": np.stack([s.x0 for s in sys]),
            "fu0": np.stack([s.u0 for s in sys]),
            "u0": np.stack([m.process.u0 for m in self.legs]),
        }

    def gains(self):
        return np.stack([m.L for m in self.legs])

    def to_dict(self):
        return {"seed": self.seed, "legs": [m.to_dict() for m in self.legs]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(LegModel.from_dict(m) for m in d["legs"]), int(d["seed"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def excitation_data(config, seed, rig=None):
    """Multisine runs of all four transmissions in free air."""
    rig = rig or Rig(config)
    s = config.sysid
    dt = config.harness.dt
    drives = np.stack([
        design_excitation((s.freq_lo, s.freq_hi), s.amplitude, s.duration, dt, seed ^ (leg + 1))
        for leg in range(N_LEGS)
    ])
    n = drives.shape[1]
    res = rig.run(n, seed, "air", np.zeros((N_LEGS, n, 4)), drives)
    return [
        ResponseDataset(res.legs[:, leg, C_VCMD:C_VCMD + 2], res.legs[:, leg, C_Q:C_Q + 4], dt)
        for leg in range(N_LEGS)
    ]


def measurement_models(config, calibration, leg):
    """Swing and lift encoder models of one leg from its calibration."""
    out = []
    for a in range(2):
        c = calibration.actuators[2 * leg + a]
        params = replace(config.sensor.nominal, alpha=c.alpha, dt=config.harness.dt)
        out.append(build_measurement_model(params, np.array(c.N_H), np.array(c.N_D)))
    return out


def identify(config, calibration, seed=None):
    """Fit every leg's process model and derive its Kalman and LQR gains."""
    seed = config.seed if seed is None else seed
    rig = Rig(config)
    train = excitation_data(config, seed, rig)
    test = excitation_data(config, seed ^ 0x5A5A, rig)
    Q, R = build_cost(config.controller.weights)
    legs = []
    for leg in range(N_LEGS):
        proc = fit_linear_model(train[leg], seed=seed)
        holdout = prediction_error(proc, test[leg], horizon=1)
        legs.append(design_leg(proc, *measurement_models(config, calibration, leg), Q, R, holdout))
    return ModelBundle(tuple(legs), int(seed))


def design_leg(proc, meas_swing, meas_lift, Q, R, holdout=float("nan")):
    system = build_augmented_system(proc, meas_swing, meas_lift)
    K = compute_kalman_gain(system)
    law = compute_lqr_gain(proc, Q, R)
    return LegModel(proc, system, K, law.L, float(holdout))


def redesign_gains(bundle, weights):
    """Same models, new LQR weights."""
    Q, R = build_cost(weights)
    legs = tuple(replace(m, L=compute_lqr_gain(m.process, Q, R).L) for m in bundle.legs)
    return replace(bundle, legs=legs)


def stability_report(bundle):
    rows = []
    for m in bundle.legs:
        rows.append({
            "process_radius": spectral_radius(m.process.A_p),
            "control_radius": spectral_radius(m.process.A_p - m.process.B_p @ m.L),
            "estimator_radius": estimator_spectral_radius(m.system, m.K),
            "holdout_error": m.holdout_error,
        })
    return rows
