"""Locomotion performance metrics and normalized tracking errors."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import units
from .errors import DegenerateReference, EmptyTrace, MissingContactData, ZeroElectricalPower

STEP_LENGTH = 4.7  # mm, kinematic step length
ROBOT_MASS = 1.43e-3  # kg
TRANSIENT_STRIDES = 2


@dataclass
class TrialTrace:
    """Control-rate time series of one trial.

    Arrays are indexed by tick first.  Actuator channels are ordered
    (FL swing, FL lift, FR swing, ...).
    """

    dt: float
    stride_ticks: int
    steps_per_stride: int
    body_vx: np.ndarray  # (n,) mm/s
    tip_vx: np.ndarray = None  # (n, 4) world-frame tip velocity, mm/s
    in_contact: np.ndarray = None  # (n, 4) bool
    i_m: np.ndarray = None  # (n, 8) mA
    V_m: np.ndarray = None  # (n, 8) V
    q_true: np.ndarray = None  # (n, 4, 4) per leg (q_s, qdot_s, q_l, qdot_l)
    q_hat: np.ndarray = None  # (n, 4, 4)
    q_ref: np.ndarray = None  # (n, 4, 4)
    leg_true: np.ndarray = None  # (n, 4, 2) l_x, l_z
    leg_hat: np.ndarray = None  # (n, 4, 2)
    mass: float = ROBOT_MASS

    def __len__(self):
        return len(self.body_vx)

    @property
    def frequency(self):
        return 1.0 / (self.stride_ticks * self.dt)


@dataclass
class MetricsRecord:
    nu: float
    sigma: float
    epsilon: float
    cot: float
    speed: float
    E_est_swing: float = math.nan
    E_est_lift: float = math.nan
    E_cont_swing: float = math.nan
    E_cont_lift: float = math.nan
    E_leg_x: float = math.nan
    E_leg_z: float = math.nan
    flags: set = field(default_factory=set)


def analysis_window(trace, transient=TRANSIENT_STRIDES):
    """Slice covering the largest whole number of strides after the transient.

    The transient is shortened when the trace is too short to keep at
    least one stride.
    """
    n_strides = len(trace) // trace.stride_ticks
    if n_strides < 1:
        raise EmptyTrace("trace shorter than one stride")
    skip = min(transient, n_strides - 1)
    start = skip * trace.stride_ticks
    return slice(start, n_strides * trace.stride_ticks)


def _strides(trace, window):
    p = trace.stride_ticks
    return [slice(s, s + p) for s in range(window.start, window.stop, p)]


def mean_speed(trace, transient=TRANSIENT_STRIDES):
    w = analysis_window(trace, transient)
    return float(np.mean(trace.body_vx[w]))


def heading(trace, transient=TRANSIENT_STRIDES):
    """+1 or -1 from the net body displacement over the window."""
    return -1.0 if mean_speed(trace, transient) < 0.0 else 1.0


def normalized_speed(trace, transient=TRANSIENT_STRIDES, step_length=STEP_LENGTH):
    """Body speed over the kinematic speed ``L_s * n * f``."""
    if len(trace) == 0:
        raise EmptyTrace("empty trace")
    v = mean_speed(trace, transient)
    return v / (step_length * trace.steps_per_stride * trace.frequency)


def slip_per_stride(trace, transient=TRANSIENT_STRIDES):
    """Total backward-slip distance (mm, all legs) in each analysed stride."""
    if trace.tip_vx is None or trace.in_contact is None:
        raise MissingContactData("trace has no tip velocities or contact flags")
    w = analysis_window(trace, transient)
    h = heading(trace, transient)
    vx = np.asarray(trace.tip_vx, dtype=float)
    slipping = np.asarray(trace.in_contact, dtype=bool) & (vx * h < 0.0)
    dist = np.where(slipping, np.abs(vx), 0.0).sum(axis=1) * trace.dt
    return np.array([dist[s].sum() for s in _strides(trace, w)])


def step_effectiveness(trace, transient=TRANSIENT_STRIDES, step_length=STEP_LENGTH):
    """One minus slip over ``4 L_s`` per stride, averaged, clamped to [0, 1]."""
    slips = slip_per_stride(trace, transient)
    sigma = float(np.mean(1.0 - slips / (4.0 * step_length)))
    return min(1.0, max(0.0, sigma))


def electrical_power(trace, transient=TRANSIENT_STRIDES):
    """Mean total ``i_m * V_m`` over the window, mW."""
    if trace.i_m is None or trace.V_m is None:
        raise ZeroElectricalPower("trace has no electrical signals")
    w = analysis_window(trace, transient)
    p = np.asarray(trace.i_m)[w] * np.asarray(trace.V_m)[w]
    return float(np.mean(p.sum(axis=1))) * units.ELEC_POWER_TO_MW


def locomotion_economy(trace, transient=TRANSIENT_STRIDES, gravity=units.GRAVITY):
    """Mechanical output power ``m g v`` over electrical input power."""
    p_elec = electrical_power(trace, transient)
    if abs(p_elec) < 1e-15:
        raise ZeroElectricalPower("electrical power is zero")
    v = mean_speed(trace, transient)
    p_mech = trace.mass * gravity * v * units.MECH_POWER_TO_MW
    return p_mech / p_elec


def cost_of_transport(epsilon):
    return 1.0 / epsilon if epsilon > 0.0 else math.nan


def normalized_rms_error(actual, reference, cycles):
    """Mean over cycles of RMS error divided by reference peak-to-peak."""
    actual = np.asarray(actual, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if actual.shape != reference.shape:
        raise ValueError("actual and reference differ in length")
    if cycles < 1 or len(reference) < cycles:
        raise EmptyTrace("need at least one sample per cycle")
    per = len(reference) // cycles
    values = []
    for c in range(cycles):
        ref = reference[c * per:(c + 1) * per]
        act = actual[c * per:(c + 1) * per]
        ptp = float(np.ptp(ref))
        if ptp <= 0.0:
            raise DegenerateReference("reference has zero peak-to-peak amplitude")
        values.append(math.sqrt(float(np.mean((act - ref) ** 2))) / ptp)
    return float(np.mean(values))


def _channel_error(trace, actual, reference, transient, channel):
    w = analysis_window(trace, transient)
    cycles = (w.stop - w.start) // trace.stride_ticks
    errs = []
    for leg in range(actual.shape[1]):
        try:
            errs.append(normalized_rms_error(actual[w, leg, channel], reference[w, leg, channel],
                                             cycles))
        except DegenerateReference:
            errs.append(math.nan)  # flat target, e.g. trot lift at S2 = -50
    return float(np.mean(errs))


def tracking_errors(trace, transient=TRANSIENT_STRIDES):
    """Estimation and control errors per actuator type, legs averaged."""
    out = {}
    if trace.q_hat is not None and trace.q_true is not None:
        out["E_est_swing"] = _channel_error(trace, trace.q_hat, trace.q_true, transient, 0)
        out["E_est_lift"] = _channel_error(trace, trace.q_hat, trace.q_true, transient, 2)
    if trace.q_hat is not None and trace.q_ref is not None:
        out["E_cont_swing"] = _channel_error(trace, trace.q_hat, trace.q_ref, transient, 0)
        out["E_cont_lift"] = _channel_error(trace, trace.q_hat, trace.q_ref, transient, 2)
    if trace.leg_hat is not None and trace.leg_true is not None:
        out["E_leg_x"] = _channel_error(trace, trace.leg_hat, trace.leg_true, transient, 0)
        out["E_leg_z"] = _channel_error(trace, trace.leg_hat, trace.leg_true, transient, 1)
    return out


def compute_metrics(trace, transient=TRANSIENT_STRIDES):
    """Every metric the trace supports; missing signals leave NaNs."""
    v = mean_speed(trace, transient)
    nu = normalized_speed(trace, transient)
    flags = set()
    try:
        sigma = step_effectiveness(trace, transient)
    except MissingContactData:
        sigma = math.nan
    try:
        eps = locomotion_economy(trace, transient)
    except ZeroElectricalPower:
        eps = math.nan
        flags.add("no_power")
    if nu > 1.0:
        flags.add("dynamic_stride")
    if v < 0.0:
        flags.add("backward")
    rec = MetricsRecord(nu, sigma, eps, cost_of_transport(eps), v, flags=flags)
    for key, value in tracking_errors(trace, transient).items():
        setattr(rec, key, value)
        if math.isnan(value):
            flags.add("flat_reference")
    return rec
