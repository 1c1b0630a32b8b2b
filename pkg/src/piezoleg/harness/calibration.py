"""Per-actuator encoder calibration on the simulated rig.

A zero-input run gives the channel offsets and the noise covariances of
``[V_m(k), V_m(k-1)]`` and ``[V(k), V(k-1)]``.  Sinusoidal runs across the
operating frequencies give the velocity scaling by least squares of true
tip velocity on mechanical current.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InsufficientExcitation
from ..gait import sinusoid_reference
from .rig import Rig
from .simulate import C_IM, C_Q, C_V, C_VM

N_ACT = 8


@dataclass(frozen=True)
class ActuatorCalibration:
    alpha: float
    offset_vm: float
    offset_v: float
    N_H: tuple  # 2x2 nested tuples
    N_D: tuple

    def to_dict(self):
        return {"alpha": self.alpha, "offset_vm": self.offset_vm, "offset_v": self.offset_v,
                "N_H": [list(r) for r in self.N_H], "N_D": [list(r) for r in self.N_D]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["alpha"]), float(d["offset_vm"]), float(d["offset_v"]),
                   tuple(tuple(float(v) for v in r) for r in d["N_H"]),
                   tuple(tuple(float(v) for v in r) for r in d["N_D"]))


@dataclass(frozen=True)
class Calibration:
    actuators: tuple  # 8 ActuatorCalibration, order FL_s, FL_l, FR_s, ...
    seed: int

    def offsets(self):
        return np.array([[a.offset_vm, a.offset_v] for a in self.actuators])

    def to_dict(self):
        return {"seed": self.seed, "actuators": [a.to_dict() for a in self.actuators]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(ActuatorCalibration.from_dict(a) for a in d["actuators"]), int(d["seed"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def lag_covariance(signal):
    """2x2 covariance of ``[s(k), s(k-1)]`` after removing the mean."""
    s = np.asarray(signal, dtype=float)
    s = s - s.mean()
    pairs = np.column_stack([s[1:], s[:-1]])
    c = pairs.T @ pairs / len(pairs)
    return 0.5 * (c + c.T)


def fit_alpha(current, velocity):
    """Least-squares ``velocity ~ alpha * current``."""
    i = np.asarray(current, dtype=float)
    v = np.asarray(velocity, dtype=float)
    denom = float(i @ i)
    if denom <= 1e-18 * max(1, len(i)):
        raise InsufficientExcitation("mechanical current is identically zero")
    return float(i @ v) / denom


def calibrate(config, seed=None):
    """Run the zero-input and sinusoid experiments and fit every actuator."""
    seed = config.seed if seed is None else seed
    h = config.harness
    rig = Rig(config)

    zero = rig.open_loop(np.zeros((1, 2)), config.calibration.zero_input_ticks, seed,
                         setting="air", offsets=np.zeros((N_ACT, 2)))
    vm = zero.legs[:, :, C_VM:C_VM + 2].reshape(len(zero.legs), N_ACT)
    vv = zero.legs[:, :, C_V:C_V + 2].reshape(len(zero.legs), N_ACT)
    offsets = np.column_stack([vm.mean(axis=0), vv.mean(axis=0)])

    currents = [[] for _ in range(N_ACT)]
    velocities = [[] for _ in range(N_ACT)]
    amp_rms = config.calibration.amplitude / np.sqrt(2.0)
    for n, f in enumerate(config.calibration.freqs):
        drive = sinusoid_reference(1.0 / f, h.dt, "decoupled", [[amp_rms, amp_rms]]).voltages
        period = drive.shape[0]
        ticks = period * config.calibration.strides_per_freq
        res = rig.open_loop(drive, ticks, seed ^ (n + 1), setting="air", offsets=offsets)
        keep = slice(period, ticks)
        for leg in range(4):
            for a in range(2):
                ch = 2 * leg + a
                currents[ch].append(res.legs[keep, leg, C_IM + a])
                velocities[ch].append(res.legs[keep, leg, C_Q + 1 + 2 * a])

    acts = []
    for ch in range(N_ACT):
        alpha = fit_alpha(np.concatenate(currents[ch]), np.concatenate(velocities[ch]))
        acts.append(ActuatorCalibration(
            alpha=alpha,
            offset_vm=float(offsets[ch, 0]),
            offset_v=float(offsets[ch, 1]),
            N_H=_tup(lag_covariance(vm[:, ch])),
            N_D=_tup(lag_covariance(vv[:, ch])),
        ))
    return Calibration(tuple(acts), int(seed))


def _tup(m):
    return tuple(tuple(float(v) for v in row) for row in m)
