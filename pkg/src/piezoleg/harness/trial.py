"""One trial: build inputs for a mode, run the loop, compute metrics, write the trace."""

import gzip
import math
from dataclasses import dataclass, field

import numpy as np

from ..controller import feedforward_from_reference
from ..errors import Divergence
from ..gait import GaitParams, assign_leg_phases, gait_reference, sinusoid_reference
from ..metrics import MetricsRecord, TrialTrace, analysis_window, compute_metrics
from ..plant import LEG_NAMES, N_LEGS
from .rig import Rig, stack_legs
from .simulate import (C_CONTACT, C_IM, C_LEG, C_LEGHAT, C_Q, C_QHAT, C_QREF, C_SAT,
                       C_TIPVX, C_VCMD, C_VM)

MODES = ("closed_loop", "open_loop_coupled", "open_loop_decoupled", "estimator_only")

CSV_FIELDS = (
    "trial_id", "gait", "mode", "setting", "f_hz", "S1", "S2", "S3",
    "nu", "sigma", "epsilon", "cot",
    "E_est_swing", "E_est_lift", "E_cont_swing", "E_cont_lift",
    "E_leg_x", "E_leg_z", "speed", "vrms_swing", "vrms_lift", "flags",
)


@dataclass(frozen=True)
class TrialSpec:
    trial_id: int
    gait: GaitParams
    mode: str = "closed_loop"
    setting: str = "ground"
    rms: tuple = None  # (swing, lift) volts for the open-loop baselines
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class TrialRecord:
    spec: TrialSpec
    metrics: MetricsRecord
    vrms_swing: float
    vrms_lift: float
    flags: tuple = ()
    trace_path: str = None
    trace: TrialTrace = field(default=None, repr=False)

    def row(self):
        g = self.spec.gait
        m = self.metrics
        is_pronk = g.base_gait == "pronk"
        return {
            "trial_id": self.spec.trial_id, "gait": g.base_gait, "mode": self.spec.mode,
            "setting": self.spec.setting, "f_hz": round(1.0 / g.T, 9), "S1": g.S1,
            "S2": None if is_pronk else g.S2, "S3": g.S3 if is_pronk else None,
            "nu": m.nu, "sigma": m.sigma, "epsilon": m.epsilon, "cot": m.cot,
            "E_est_swing": m.E_est_swing, "E_est_lift": m.E_est_lift,
            "E_cont_swing": m.E_cont_swing, "E_cont_lift": m.E_cont_lift,
            "E_leg_x": m.E_leg_x, "E_leg_z": m.E_leg_z, "speed": m.speed,
            "vrms_swing": self.vrms_swing, "vrms_lift": self.vrms_lift,
            "flags": "|".join(self.flags),
        }


def _inputs(config, bundle, spec, dt):
    g = spec.gait
    phases = assign_leg_phases(g.base_gait)
    if spec.mode == "closed_loop":
        reference = gait_reference(g, dt, config.gait.n_knots)
        ref = np.stack([reference.for_leg(i) for i in range(N_LEGS)])
        if config.controller.feedforward:
            drive = np.stack([
                feedforward_from_reference(bundle.legs[i].process, ref[i])
                for i in range(N_LEGS)
            ])
        else:
            drive = np.zeros(ref.shape[:2] + (2,))
        return ref, drive, bundle.gains(), True
    if spec.mode == "estimator_only":
        a = config.harness.validation_amplitude / math.sqrt(2.0)
        volts = sinusoid_reference(g.T, dt, "decoupled", [[a, a]], g.base_gait).voltages
    else:
        if spec.rms is None:
            from ..errors import MissingBaselineData
            raise MissingBaselineData("open-loop baseline needs RMS voltages")
        matching = "coupled" if spec.mode == "open_loop_coupled" else "decoupled"
        volts = sinusoid_reference(g.T, dt, matching, [list(spec.rms)], g.base_gait).voltages
    drive = stack_legs(volts, phases)
    return np.zeros(drive.shape[:2] + (4,)), drive, None, False


def run_trial(config, bundle, calibration, spec, trace_path=None, keep_trace=False):
    """Simulate one trial and return its record.

    Raises:
        Divergence: the plant state blew up.
    """
    h = config.harness
    dt = h.dt
    rig = Rig(config)
    ref, drive, L, tracking = _inputs(config, bundle, spec, dt)
    period = ref.shape[1]
    n = period * h.strides
    alphas = [a.alpha for a in calibration.actuators]
    res = rig.run(n, spec.seed, spec.setting, ref, drive, L, bundle.filter_arrays(), alphas,
                  calibration.offsets())
    if res.diverged:
        raise Divergence(f"trial {spec.trial_id} diverged at tick {res.diverged_at}")

    legs = res.legs
    trace = TrialTrace(
        dt=dt, stride_ticks=period, steps_per_stride=spec.gait.steps_per_stride,
        body_vx=res.body[:, 3],
        tip_vx=legs[:, :, C_TIPVX], in_contact=legs[:, :, C_CONTACT] > 0.5,
        i_m=legs[:, :, C_IM:C_IM + 2].reshape(n, 2 * N_LEGS),
        V_m=legs[:, :, C_VM:C_VM + 2].reshape(n, 2 * N_LEGS),
        q_true=legs[:, :, C_Q:C_Q + 4], q_hat=legs[:, :, C_QHAT:C_QHAT + 4],
        q_ref=legs[:, :, C_QREF:C_QREF + 4] if tracking else None,
        leg_true=legs[:, :, C_LEG:C_LEG + 2], leg_hat=legs[:, :, C_LEGHAT:C_LEGHAT + 2],
    )
    metrics = compute_metrics(trace, h.transient_strides)
    w = analysis_window(trace, h.transient_strides)
    u0 = bundle.filter_arrays()["u0"]
    dev = legs[w, :, C_VCMD:C_VCMD + 2] - u0[None, :, :]
    vrms = np.sqrt(np.mean(dev**2, axis=0)).mean(axis=0)
    flags = set(metrics.flags)
    if np.any(legs[w, :, C_SAT] > 0.5):
        flags.add("saturation")
    record = TrialRecord(spec, metrics, float(vrms[0]), float(vrms[1]), tuple(sorted(flags)))
    if trace_path is not None:
        write_trace(trace_path, res, dt)
        record.trace_path = str(trace_path)
    if keep_trace:
        record.trace = trace
    return record


def trace_columns():
    cols = ["t", "x_b", "z_b", "theta_b", "vx_b", "vz_b"]
    for leg in LEG_NAMES:
        cols += [f"{leg}_{c}" for c in (
            "q_s", "q_l", "qhat_s", "qhat_l", "qref_s", "qref_l", "V_s", "V_l",
            "Vm_s", "Vm_l", "im_s", "im_l", "tip_vx", "contact")]
    return cols


def write_trace(path, res, dt=None):
    """Gzipped tab-separated trace, one row per control tick."""
    n = res.body.shape[0]
    dt = dt if dt is not None else 1.0
    legs = res.legs
    per_leg = [C_Q, C_Q + 2, C_QHAT, C_QHAT + 2, C_QREF, C_QREF + 2, C_VCMD, C_VCMD + 1,
               C_VM, C_VM + 1, C_IM, C_IM + 1, C_TIPVX, C_CONTACT]
    block = legs[:, :, per_leg].reshape(n, -1)
    table = np.column_stack([np.arange(n) * dt, res.body[:, :5], block])
    with gzip.GzipFile(path, "wb", compresslevel=1, mtime=0) as raw:
        raw.write(("\t".join(trace_columns()) + "\n").encode())
        np.savetxt(raw, table, fmt="%.7g", delimiter="\t")


def read_trace(path):
    with gzip.open(path, "rt") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        data = np.loadtxt(fh, delimiter="\t", ndmin=2)
    return header, data
