"""Experiment configuration: JSON file with one section per module."""

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from ..controller import CostWeights
from ..gait import FREQ_GRID, S1_GRID, S2_GRID, S3_GRID, DEFAULT_AMPLITUDE_UM, N_KNOTS
from ..errors import ParamOutOfRange
from ..plant import KinematicsParams, RobotParams, SurfaceModel, TransmissionParams
from ..sensor import SensorParams

OUT_ENV = "PIEZOLEG_OUT"


@dataclass(frozen=True)
class PlantConfig:
    transmission: TransmissionParams = TransmissionParams()
    kinematics: KinematicsParams = KinematicsParams()
    # the estimator's leg map; differs from the true linkage by a few percent
    kinematics_model: KinematicsParams = KinematicsParams(gain_x=26.3, gain_z=19.5, cross=0.5,
                                                          quad=0.65)
    robot: RobotParams = RobotParams()
    surface: SurfaceModel = SurfaceModel()
    process_noise_std: float = 20.0  # mN, actuator force noise per tick
    # series flexure compliance between actuators and leg tip
    output_compliance: float = 0.04  # mm/mN


@dataclass(frozen=True)
class SensorConfig:
    nominal: SensorParams = SensorParams()
    # per-actuator true velocity scaling, order FL_s, FL_l, FR_s, ...
    alpha_true: tuple = (40.0, 41.0, 39.5, 40.5, 40.8, 39.2, 40.2, 39.8)
    noise_std_vm: float = 0.5  # V
    noise_std_v: float = 0.1  # V
    offset_vm: float = 0.2  # V
    offset_v: float = 0.05  # V


@dataclass(frozen=True)
class SysidConfig:
    freq_lo: float = 10.0
    freq_hi: float = 50.0
    amplitude: float = 120.0  # V peak
    duration: float = 10.0  # s


@dataclass(frozen=True)
class CalibrationConfig:
    freqs: tuple = FREQ_GRID
    amplitude: float = 80.0  # V peak sinusoid
    strides_per_freq: int = 10
    zero_input_ticks: int = 5000


@dataclass(frozen=True)
class ControllerConfig:
    # picked by tune_weights over the grid below on the default plant
    weights: CostWeights = CostWeights(k_p=1.0, k_d=1e-5, k_u=1e-6)
    feedforward: bool = True
    tuning_k_d: tuple = (1e-5, 1e-4, 1e-3)
    tuning_k_u: tuple = (1e-6, 1e-5, 1e-4, 1e-3)


@dataclass(frozen=True)
class GaitConfig:
    freqs: tuple = FREQ_GRID
    S1: tuple = S1_GRID
    S2: tuple = S2_GRID
    S3: tuple = S3_GRID
    trot_amplitude: float = DEFAULT_AMPLITUDE_UM["trot"]
    pronk_amplitude: float = DEFAULT_AMPLITUDE_UM["pronk"]
    n_knots: int = N_KNOTS

    def __post_init__(self):
        checks = (
            ("freqs", self.freqs, 10.0, 50.0),
            ("S1", self.S1, 50.0, 80.0),
            ("S2", self.S2, -75.0, 25.0),
            ("S3", self.S3, 20.0, 80.0),
        )
        for name, values, lo, hi in checks:
            if not values or any(not lo <= v <= hi for v in values):
                raise ParamOutOfRange(f"gait grid {name}={values} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class HarnessConfig:
    sample_rate: float = 2500.0  # Hz
    substeps: int = 10
    strides: int = 20
    transient_strides: int = 2
    validation_freqs: tuple = FREQ_GRID
    validation_amplitude: float = 120.0  # V peak, estimator sinusoids (identification level)
    validation_S1: float = 50.0
    validation_S2: float = 0.0
    validation_repeats: int = 3
    write_traces: bool = True

    @property
    def dt(self):
        return 1.0 / self.sample_rate


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    plant: PlantConfig = PlantConfig()
    sensor: SensorConfig = SensorConfig()
    sysid: SysidConfig = SysidConfig()
    calibration: CalibrationConfig = CalibrationConfig()
    controller: ControllerConfig = ControllerConfig()
    gait: GaitConfig = GaitConfig()
    harness: HarnessConfig = HarnessConfig()
    out_dir: str = "out"

    def with_overrides(self, seed=None, out_dir=None):
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if out_dir is not None:
            changes["out_dir"] = str(out_dir)
        return dataclasses.replace(self, **changes) if changes else self

    def resolved_out_dir(self):
        return Path(os.environ.get(OUT_ENV) or self.out_dir)

    def to_dict(self):
        return _to_plain(self)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        if "seed" not in data:
            raise ValueError("config must set 'seed'")
        return _build(cls, data, cls(seed=int(data["seed"])))


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, data, default):
    unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        current = getattr(default, f.name)
        if f.name not in data:
            kwargs[f.name] = current
            continue
        value = data[f.name]
        if dataclasses.is_dataclass(current):
            kwargs[f.name] = _build(type(current), value, current)
        elif isinstance(current, tuple):
            kwargs[f.name] = tuple(value)
        elif isinstance(current, bool):
            kwargs[f.name] = bool(value)
        elif isinstance(current, int) and not isinstance(current, bool):
            kwargs[f.name] = int(value)
        elif isinstance(current, float):
            kwargs[f.name] = float(value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)


def load_config(path):
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def save_config(config, path):
    Path(path).write_text(config.dumps() + "\n")
