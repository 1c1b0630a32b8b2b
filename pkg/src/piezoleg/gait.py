"""Parametric trot/pronk leg trajectories and sinusoidal baseline drives.

Keyframe skeletons are piecewise linear in stride phase (0..1).  They are
sampled on a uniform knot grid and smoothed with a periodic cubic spline;
velocities come from the spline's analytic derivative.

Sign conventions: positive swing deflection moves the leg forward
(protraction), positive lift deflection moves it down toward the ground
(adduction).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import MissingBaselineData, NonPeriodicKeyframes, ParamOutOfRange

GAITS = ("trot", "pronk", "coupled_sine", "decoupled_sine")
STEPS_PER_STRIDE = {"trot": 2, "pronk": 1}

S1_GRID = (50.0, 60.0, 70.0, 80.0)
S2_GRID = (-75.0, -50.0, -25.0, 0.0, 25.0)
S3_GRID = (20.0, 35.0, 50.0, 65.0, 80.0)
FREQ_GRID = (10.0, 20.0, 30.0, 40.0, 50.0)

DEFAULT_AMPLITUDE_UM = {"trot": 175.0, "pronk": 150.0}

# leg order FL, FR, RL, RR
_PHASES = {"trot": (0.0, 0.5, 0.5, 0.0), "pronk": (0.0, 0.0, 0.0, 0.0)}

PERIOD_TOLERANCE = 1e-3
# knots per stride; finer knots keep sharp corners that the model inversion
# turns into voltage spikes at high stride rates
N_KNOTS = 20
# half-width of the pronk lift edges; interpolating a bare jump overshoots ~8%
PRONK_RAMP = 0.08


@dataclass(frozen=True)
class GaitParams:
    gait: str = "trot"
    A_S: float = None  # um, peak-to-peak swing
    A_L: float = None  # um, peak-to-peak lift
    T: float = 0.1  # s
    S1: float = 50.0  # % of T spent retracting
    S2: float = 0.0  # % of A_L, trot stance adduction
    S3: float = 50.0  # % of T adducted, pronk

    def __post_init__(self):
        if self.gait not in GAITS:
            raise ParamOutOfRange(f"unknown gait {self.gait!r}")
        base = self.base_gait
        if self.A_S is None:
            object.__setattr__(self, "A_S", DEFAULT_AMPLITUDE_UM[base])
        if self.A_L is None:
            object.__setattr__(self, "A_L", DEFAULT_AMPLITUDE_UM[base])
        if not (self.A_S > 0 and self.A_L > 0):
            raise ParamOutOfRange("amplitudes must be positive")
        f = 1.0 / self.T if self.T > 0 else np.inf
        if not (10.0 - 1e-9 <= f <= 50.0 + 1e-9):
            raise ParamOutOfRange(f"stride frequency {f} Hz outside [10, 50]")
        if not 50.0 <= self.S1 <= 80.0:
            raise ParamOutOfRange(f"S1={self.S1} outside [50, 80]")
        if not -75.0 <= self.S2 <= 25.0:
            raise ParamOutOfRange(f"S2={self.S2} outside [-75, 25]")
        if not 20.0 <= self.S3 <= 80.0:
            raise ParamOutOfRange(f"S3={self.S3} outside [20, 80]")

    @property
    def base_gait(self):
        return "pronk" if self.gait == "pronk" else "trot"

    @property
    def frequency(self):
        return 1.0 / self.T

    @property
    def steps_per_stride(self):
        return STEPS_PER_STRIDE[self.base_gait]


@dataclass(frozen=True)
class Keyframes:
    """Piecewise-linear schedules ``(phase, value_mm)`` per channel."""

    swing: tuple
    lift: tuple


@dataclass(frozen=True)
class ReferenceTrajectory:
    samples: np.ndarray  # (period, 4): q_s, qdot_s, q_l, qdot_l
    dt: float
    phase_offsets: tuple = (0.0, 0.0, 0.0, 0.0)
    spline: object = field(default=None, repr=False, compare=False)

    @property
    def period(self):
        return self.samples.shape[0]

    def evaluate(self, t):
        """Spline position/velocity at arbitrary times (s)."""
        t = np.asarray(t, dtype=float)
        pos = self.spline(t)
        vel = self.spline(t, 1)
        return np.stack([pos[..., 0], vel[..., 0], pos[..., 1], vel[..., 1]], axis=-1)

    def leg_index(self, k, leg):
        """Sample index of ``leg`` at global tick ``k``."""
        offset = int(round(self.phase_offsets[leg] * self.period))
        return (k + offset) % self.period

    def for_leg(self, leg):
        """One period of samples rotated to ``leg``'s phase."""
        offset = int(round(self.phase_offsets[leg] * self.period))
        return np.roll(self.samples, -offset, axis=0)

    def rows(self):
        """Dump rows ``(t, q_s, qdot_s, q_l, qdot_l)`` for one period."""
        t = np.arange(self.period) * self.dt
        return np.column_stack([t, self.samples])


def _um(value):
    return value * 1e-3


def _swing_frames(params):
    a = 0.5 * _um(params.A_S)
    r = params.S1 / 100.0
    return ((0.0, a), (r, -a), (1.0, a))


def keyframes_trot(params):
    """Constant-speed retraction with a stance adduction peak set by S2."""
    if params.base_gait != "trot":
        raise ParamOutOfRange("trot keyframes need a trot gait")
    r = params.S1 / 100.0
    a_l = _um(params.A_L)
    stance_mid = 0.5 * r
    flight_mid = r + 0.5 * (1.0 - r)
    peak = params.S2 / 100.0 * a_l
    low = -0.5 * a_l
    # wrap-around value at phase 0 lies on the segment flight_mid -> 1 + stance_mid
    frac = (1.0 - flight_mid) / (1.0 + stance_mid - flight_mid)
    at_zero = low + frac * (peak - low)
    lift = ((0.0, at_zero), (stance_mid, peak), (flight_mid, low), (1.0, at_zero))
    return Keyframes(_swing_frames(params), lift)


def keyframes_pronk(params, ramp=PRONK_RAMP):
    """Square lift: adducted for S3 % of the stride starting at phase 0.

    Each edge is a linear ramp of half-width ``ramp`` (stride fraction)
    centred on the switching instant; ``ramp=0`` gives true jumps.
    """
    if params.base_gait != "pronk":
        raise ParamOutOfRange("pronk keyframes need a pronk gait")
    a = 0.5 * _um(params.A_L)
    s3 = params.S3 / 100.0
    if ramp == 0.0:
        # repeated phases mark jumps; the value exactly at a jump is the mean
        lift = ((0.0, a), (s3, a), (s3, -a), (1.0, -a), (1.0, a))
    else:
        lift = ((0.0, 0.0), (ramp, a), (s3 - ramp, a), (s3 + ramp, -a),
                (1.0 - ramp, -a), (1.0, 0.0))
    return Keyframes(_swing_frames(params), lift)


def keyframes_for(params):
    return keyframes_pronk(params) if params.base_gait == "pronk" else keyframes_trot(params)


def _skeleton(frames, phase, tol=1e-12):
    """Evaluate a keyframe schedule, taking the mean at jump discontinuities."""
    ph = np.array([f[0] for f in frames], dtype=float)
    val = np.array([f[1] for f in frames], dtype=float)
    if ph[0] != 0.0 or ph[-1] != 1.0 or np.any(np.diff(ph) < 0):
        raise NonPeriodicKeyframes("keyframes must span phases 0..1 in order")
    segs = [(ph[i], ph[i + 1], val[i], val[i + 1]) for i in range(len(ph) - 1)
            if ph[i + 1] > ph[i]]
    out = np.empty(np.shape(phase))
    for j, p in enumerate(np.mod(np.ravel(phase), 1.0)):
        if p > 1.0 - tol:
            p = 0.0
        left = right = None
        for a, b, va, vb in segs:
            if abs(p - a) <= tol:
                right = va
            elif abs(p - b) <= tol:
                left = vb
            elif a < p < b:
                left = right = va + (vb - va) * (p - a) / (b - a)
                break
        if p == 0.0:
            left = segs[-1][3]
        out.flat[j] = 0.5 * (left + right)
    return out


def _check_periodic(frames):
    if not np.isclose(frames[0][1], frames[-1][1], atol=1e-12, rtol=0.0):
        raise NonPeriodicKeyframes("first and last keyframe values differ")


def spline_reference(keyframes, T, dt, n_knots=N_KNOTS, phase_offsets=(0.0, 0.0, 0.0, 0.0)):
    """Periodic cubic-spline reference sampled every ``dt`` over one stride."""
    _check_periodic(keyframes.swing)
    _check_periodic(keyframes.lift)
    n = T / dt
    period = int(round(n))
    if period < 2 or abs(n - period) > PERIOD_TOLERANCE * n:
        raise NonPeriodicKeyframes(f"dt={dt} does not divide T={T} to within 0.1%")
    knots = np.linspace(0.0, 1.0, n_knots + 1)
    y = np.column_stack([_skeleton(keyframes.swing, knots), _skeleton(keyframes.lift, knots)])
    y[-1] = y[0]
    spline = CubicSpline(knots * T, y, bc_type="periodic")
    t = np.arange(period) * (T / period)
    pos = spline(t)
    vel = spline(t, 1)
    samples = np.column_stack([pos[:, 0], vel[:, 0], pos[:, 1], vel[:, 1]])
    return ReferenceTrajectory(samples, T / period, tuple(phase_offsets), spline)


def quantized_period(T, dt):
    """Stride period rounded to a whole number of control ticks."""
    return max(2, int(round(T / dt))) * dt


def gait_reference(params, dt, n_knots=N_KNOTS):
    """Reference for a heuristic gait, with the period snapped to the tick grid."""
    T = quantized_period(params.T, dt)
    return spline_reference(keyframes_for(params), T, dt, n_knots, assign_leg_phases(params.gait))


def assign_leg_phases(gait):
    """Stride-phase offsets for (FL, FR, RL, RR)."""
    base = "pronk" if gait == "pronk" else "trot"
    return _PHASES[base]


@dataclass(frozen=True)
class SinusoidDrive:
    """Open-loop drive voltages (about the bias) for one stride."""

    voltages: np.ndarray  # (period, 2): swing, lift
    rms: tuple  # (swing, lift) RMS volts
    dt: float
    phase_offsets: tuple

    @property
    def period(self):
        return self.voltages.shape[0]

    def for_leg(self, leg):
        offset = int(round(self.phase_offsets[leg] * self.period))
        return np.roll(self.voltages, -offset, axis=0)


def baseline_rms(rms_voltages, matching):
    """Swing/lift RMS targets from per-actuator RMS voltages (4 legs x 2)."""
    if rms_voltages is None:
        raise MissingBaselineData("no closed-loop RMS voltages supplied")
    v = np.asarray(rms_voltages, dtype=float)
    if v.size == 0 or v.shape[-1] != 2 or not np.all(np.isfinite(v)):
        raise MissingBaselineData("RMS voltages must be a finite (legs, 2) array")
    v = v.reshape(-1, 2)
    if matching == "coupled":
        a = float(v.mean())
        return a, a
    if matching == "decoupled":
        return float(v[:, 0].mean()), float(v[:, 1].mean())
    raise ValueError(f"unknown matching {matching!r}")


def sinusoid_reference(T, dt, matching, rms_voltages, gait="trot"):
    """Sinusoidal drive matched in RMS to a closed-loop trial.

    Swing follows a cosine and lift a sine, so the leg is adducted while
    it retracts.
    """
    a_s, a_l = baseline_rms(rms_voltages, matching)
    T = quantized_period(T, dt)
    period = int(round(T / dt))
    phase = np.arange(period) / period
    amp = np.sqrt(2.0)
    volts = np.column_stack([
        amp * a_s * np.cos(2.0 * np.pi * phase),
        amp * a_l * np.sin(2.0 * np.pi * phase),
    ])
    return SinusoidDrive(volts, (a_s, a_l), dt, assign_leg_phases(gait))
