"""Surrogate plant: one swing/lift transmission, leg kinematics, penalty
ground contact and a sagittal-plane body carrying four legs.

Conventions used everywhere in the package:

* actuator deflections ``q_s`` (swing) and ``q_l`` (lift) in mm;
* leg frame: ``l_x`` forward (protraction), ``l_z`` downward (adduction,
  toward the ground);
* world frame: ``x`` forward, ``z`` up, pitch ``theta`` positive nose-up;
* legs are ordered FL, FR, RL, RR.

The per-step physics lives in numba kernels (``_k_*``) operating on
packed float arrays so the same code runs inside the fused trial loop of
:mod:`piezoleg.harness.simulate`.  The dataclasses below are the public,
validated face of those kernels.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from . import units
from .errors import InvalidTimestep, NonFinite, OutOfRange

N_LEGS = 4
LEG_NAMES = ("FL", "FR", "RL", "RR")
MAX_DT = 1e-3


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class AxisParams:
    """Second-order model of one actuator axis referred to its tip."""

    natural_freq_hz: float
    damping_ratio: float
    stiffness: float  # mN/mm
    cubic: float  # 1/mm^2, hardening k3 = cubic * stiffness
    volt_gain: float  # mm/V static deflection

    @property
    def mass(self):
        return self.stiffness / (2.0 * math.pi * self.natural_freq_hz) ** 2

    @property
    def damping(self):
        return 2.0 * self.damping_ratio * math.sqrt(self.stiffness * self.mass)

    @property
    def force_per_volt(self):
        return self.stiffness * self.volt_gain


@dataclass(frozen=True)
class TransmissionParams:
    swing: AxisParams = AxisParams(90.0, 0.15, 25000.0, 5.0, 1e-3)
    lift: AxisParams = AxisParams(85.0, 0.15, 25000.0, 6.0, 1e-3)
    coupling: float = 0.3  # 1/mm, bilinear swing-lift term
    q_max: float = 0.15  # mm
    v_min: float = -150.0  # V, relative to the drive bias
    v_max: float = 150.0

    def packed(self):
        s, l = self.swing, self.lift
        return np.array(
            [
                s.stiffness, s.mass, s.damping, s.cubic, s.force_per_volt,
                l.stiffness, l.mass, l.damping, l.cubic, l.force_per_volt,
                self.coupling,
            ]
        )


@dataclass(frozen=True)
class KinematicsParams:
    """Polynomial actuator-to-leg map.

    ``l_x = gain_x * q_s * (1 + cross * q_l)``,
    ``l_z = gain_z * (q_l + quad * q_l**2)``.
    """

    gain_x: float = 26.9
    gain_z: float = 20.0
    cross: float = 0.6  # 1/mm
    quad: float = 0.8  # 1/mm

    def packed(self):
        return np.array([self.gain_x, self.gain_z, self.cross, self.quad])


@dataclass(frozen=True)
class SurfaceModel:
    height: float = 0.0  # mm, world z of the ground plane
    k_n: float = 100.0  # mN/mm (= N/m)
    c_n: float = 0.05  # mN s/mm
    mu: float = 0.6
    v_reg: float = 1.0  # mm/s

    def __post_init__(self):
        if not (self.k_n > 0 and self.c_n >= 0 and self.mu >= 0 and self.v_reg > 0):
            raise ValueError(f"invalid surface parameters: {self}")

    def packed(self):
        return np.array([self.height, self.k_n, self.c_n, self.mu, self.v_reg])


@dataclass(frozen=True)
class RobotParams:
    mass: float = 1.43e-3  # kg
    body_length: float = 45.0  # mm
    body_height: float = 10.0  # mm
    hip_x: tuple = (15.0, 15.0, -15.0, -15.0)  # mm, FL FR RL RR
    leg_length: float = 8.0  # mm, hip to tip at neutral
    z_resonance_hz: float = 10.0
    suspension_damping_ratio: float = 0.2

    @property
    def inertia(self):
        """Pitch inertia of a uniform box, kg mm^2."""
        return self.mass * (self.body_length**2 + self.body_height**2) / 12.0

    @property
    def weight(self):
        return self.mass * units.GRAVITY

    @property
    def suspension_stiffness(self):
        """Per-leg vertical stiffness putting the four-leg bounce at z_resonance_hz."""
        return self.mass * (2.0 * math.pi * self.z_resonance_hz) ** 2 / N_LEGS

    @property
    def suspension_damping(self):
        total = 2.0 * self.suspension_damping_ratio * math.sqrt(
            N_LEGS * self.suspension_stiffness * self.mass
        )
        return total / N_LEGS

    def packed(self):
        return np.array(
            [self.mass, self.inertia, self.leg_length, *self.hip_x, units.GRAVITY]
        )

    def effective_surface(self, surface):
        """Ground contact seen through each leg's suspension spring.

        The suspension is a series compliance between hip and tip: the
        normal stiffness is the series combination with the surface and
        the damping is split in proportion to each spring's share.
        """
        k_s = self.suspension_stiffness
        k_eff = surface.k_n * k_s / (surface.k_n + k_s)
        c_eff = self.suspension_damping * (k_eff / k_s) + surface.c_n * (k_eff / surface.k_n)
        return replace(surface, k_n=k_eff, c_n=c_eff)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _k_fk(q_s, q_l, kin):
    l_x = kin[0] * q_s * (1.0 + kin[2] * q_l)
    l_z = kin[1] * (q_l + kin[3] * q_l * q_l)
    return l_x, l_z


@njit(cache=True)
def _k_jac(q_s, q_l, kin):
    j11 = kin[0] * (1.0 + kin[2] * q_l)
    j12 = kin[0] * kin[2] * q_s
    j22 = kin[1] * (1.0 + 2.0 * kin[3] * q_l)
    return j11, j12, j22


@njit(cache=True)
def _k_ik(l_x, l_z, kin):
    r = l_z / kin[1]
    # root of quad*q^2 + q - r = 0 without cancellation near zero
    q_l = 2.0 * r / (1.0 + math.sqrt(1.0 + 4.0 * kin[3] * r))
    q_s = l_x / (kin[0] * (1.0 + kin[2] * q_l))
    return q_s, q_l


@njit(cache=True)
def _k_trans_accel(q_s, v_s, q_l, v_l, V_s, V_l, tau_s, tau_l, p):
    f_s = (
        -p[0] * (q_s + p[3] * q_s**3)
        - p[2] * v_s
        + p[4] * V_s
        - p[10] * p[0] * q_s * q_l
        + tau_s
    )
    f_l = (
        -p[5] * (q_l + p[8] * q_l**3)
        - p[7] * v_l
        + p[9] * V_l
        - 0.5 * p[10] * p[0] * q_s * q_s
        + tau_l
    )
    return f_s / p[1], f_l / p[6]


@njit(cache=True)
def _k_trans_step(x, V_s, V_l, tau_s, tau_l, h, p, damp_s, damp_l, out):
    """Semi-implicit Euler step; ``damp_*`` are extra implicit damping rates."""
    a_s, a_l = _k_trans_accel(x[0], x[1], x[2], x[3], V_s, V_l, tau_s, tau_l, p)
    v_s = x[1] + h * a_s / (1.0 + h * damp_s / p[1])
    v_l = x[3] + h * a_l / (1.0 + h * damp_l / p[6])
    out[0] = x[0] + h * v_s
    out[1] = v_s
    out[2] = x[2] + h * v_l
    out[3] = v_l


@njit(cache=True)
def _k_contact(px, pz, vx, vz, surf, heading):
    """Normal/tangential ground force on a tip at world (px, pz)."""
    pen = surf[0] - pz
    if pen <= 0.0:
        return 0.0, 0.0, 0.0, False
    fn = surf[1] * pen - surf[2] * vz
    if fn < 0.0:
        fn = 0.0
    ft = -surf[3] * fn * math.tanh(vx / surf[4])
    # d(ft)/d(vx) magnitude, used for implicit friction damping
    c = math.cosh(vx / surf[4])
    dft = surf[3] * fn / (surf[4] * c * c)
    slip = vx * heading < 0.0
    return ft, fn, dft, slip


@njit(cache=True)
def _k_robot_step(body, legs, V, surf, h, tp, kin, rp, heading, tau_noise,
                  body_out, legs_out, contact_out):
    """One semi-implicit Euler step of body + four transmissions.

    ``contact_out`` rows receive (F_x, F_z, in_contact, slip, tip_x,
    tip_z, tip_vx, tip_vz) per leg, evaluated at the start of the step.
    """
    x, z, th, vx, vz, om = body[0], body[1], body[2], body[3], body[4], body[5]
    c = math.cos(th)
    s = math.sin(th)
    fx_tot = 0.0
    fz_tot = -rp[0] * rp[7]
    torque = 0.0
    damp_x = 0.0
    for i in range(4):
        q_s, v_s, q_l, v_l = legs[i, 0], legs[i, 1], legs[i, 2], legs[i, 3]
        l_x, l_z = _k_fk(q_s, q_l, kin)
        j11, j12, j22 = _k_jac(q_s, q_l, kin)
        ldx = j11 * v_s + j12 * v_l
        ldz = j22 * v_l
        bx = rp[3 + i] + l_x
        bz = -(rp[2] + l_z)
        rx = c * bx - s * bz
        rz = s * bx + c * bz
        wvx = vx + (c * ldx + s * ldz) - om * rz
        wvz = vz + (s * ldx - c * ldz) + om * rx
        ft, fn, dft, slip = _k_contact(x + rx, z + rz, wvx, wvz, surf, heading)
        fx_tot += ft
        fz_tot += fn
        torque += rx * fn - rz * ft
        damp_x += dft
        # world force -> body frame -> leg frame (l_z points down)
        fbx = c * ft + s * fn
        fbz = -s * ft + c * fn
        flx = fbx
        flz = -fbz
        tau_s = j11 * flx + tau_noise[i, 0]
        tau_l = j12 * flx + j22 * flz + tau_noise[i, 1]
        damp_s = dft * (c * j11) ** 2
        _k_trans_step(legs[i], V[i, 0], V[i, 1], tau_s, tau_l, h, tp,
                      damp_s, 0.0, legs_out[i])
        contact_out[i, 0] = ft
        contact_out[i, 1] = fn
        contact_out[i, 2] = 1.0 if fn > 0.0 or surf[0] - (z + rz) > 0.0 else 0.0
        contact_out[i, 3] = 1.0 if slip else 0.0
        contact_out[i, 4] = x + rx
        contact_out[i, 5] = z + rz
        contact_out[i, 6] = wvx
        contact_out[i, 7] = wvz
    m = rp[0]
    vx_n = vx + h * (fx_tot / m) / (1.0 + h * damp_x / m)
    vz_n = vz + h * fz_tot / m
    om_n = om + h * torque / rp[1]
    body_out[0] = x + h * vx_n
    body_out[1] = z + h * vz_n
    body_out[2] = th + h * om_n
    body_out[3] = vx_n
    body_out[4] = vz_n
    body_out[5] = om_n


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class TransmissionState:
    q_s: float = 0.0  # mm
    qdot_s: float = 0.0  # mm/s
    q_l: float = 0.0
    qdot_l: float = 0.0

    def as_array(self):
        return np.array([self.q_s, self.qdot_s, self.q_l, self.qdot_l])

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class LegPose:
    l_x: float  # mm, forward
    l_z: float  # mm, downward


@dataclass
class RobotState:
    x_b: float = 0.0  # mm
    z_b: float = 0.0  # mm
    theta_b: float = 0.0  # rad
    xdot_b: float = 0.0
    zdot_b: float = 0.0
    thetadot_b: float = 0.0
    legs: np.ndarray = field(default_factory=lambda: np.zeros((N_LEGS, 4)))

    def body_array(self):
        return np.array(
            [self.x_b, self.z_b, self.theta_b, self.xdot_b, self.zdot_b, self.thetadot_b]
        )

    @classmethod
    def from_arrays(cls, body, legs):
        return cls(*(float(v) for v in body), legs=np.array(legs, dtype=float))


def _check_dt(dt):
    if not (0.0 < dt <= MAX_DT):
        raise InvalidTimestep(f"dt must lie in (0, {MAX_DT}] s, got {dt}")


def leg_kinematics(q_s, q_l, kin=KinematicsParams(), q_max=None):
    """Actuator deflections (mm) to leg pose (mm)."""
    if q_max is not None and (abs(q_s) > q_max or abs(q_l) > q_max):
        raise OutOfRange(f"deflection ({q_s}, {q_l}) outside +/-{q_max} mm box")
    l_x, l_z = _k_fk(float(q_s), float(q_l), kin.packed())
    return LegPose(l_x, l_z)


def inverse_leg_kinematics(leg, kin=KinematicsParams()):
    """Leg pose back to actuator deflections; exact inverse of leg_kinematics."""
    r = leg.l_z / kin.gain_z
    if 1.0 + 4.0 * kin.quad * r < 0.0:
        raise OutOfRange(f"l_z={leg.l_z} outside the kinematic image")
    q_s, q_l = _k_ik(float(leg.l_x), float(leg.l_z), kin.packed())
    if 1.0 + kin.cross * q_l <= 0.0 or 1.0 + 2.0 * kin.quad * q_l <= 0.0:
        raise OutOfRange(f"leg pose {leg} outside the invertible region")
    return q_s, q_l


def leg_jacobian(q_s, q_l, kin=KinematicsParams()):
    j11, j12, j22 = _k_jac(float(q_s), float(q_l), kin.packed())
    return np.array([[j11, j12], [0.0, j22]])


def step_transmission(state, u, external_force=(0.0, 0.0), dt=4e-5,
                      params=TransmissionParams(), kin=KinematicsParams()):
    """Advance one transmission by ``dt`` under drive voltages ``u``.

    ``external_force`` is the (l_x, l_z) leg-frame tip force in mN; it is
    mapped to actuator coordinates through the kinematic Jacobian.
    """
    _check_dt(dt)
    x = state.as_array() if isinstance(state, TransmissionState) else np.asarray(state, float)
    j = leg_jacobian(x[0], x[2], kin)
    tau = j.T @ np.asarray(external_force, dtype=float)
    out = np.empty(4)
    _k_trans_step(x, float(u[0]), float(u[1]), tau[0], tau[1], dt, params.packed(),
                  0.0, 0.0, out)
    if not np.all(np.isfinite(out)):
        raise NonFinite("transmission state diverged")
    return TransmissionState.from_array(out)


def contact_force(tip_position, tip_velocity, surface, heading=1.0):
    """Penalty contact at a leg tip given in world coordinates (x, z up).

    Returns ``((F_x, F_z), slip)`` in mN; ``slip`` is true while in
    contact with the tip moving against ``heading``.
    """
    ft, fn, _, slip = _k_contact(float(tip_position[0]), float(tip_position[1]),
                                 float(tip_velocity[0]), float(tip_velocity[1]),
                                 surface.packed(), float(heading))
    return (ft, fn), bool(slip)


def step_robot(state, u, surface, dt=4e-5, tparams=TransmissionParams(),
               kin=KinematicsParams(), rparams=RobotParams(), heading=1.0,
               tau_noise=None, return_contacts=False):
    """Advance body and four transmissions by ``dt``.

    ``u`` is an (4, 2) array of (swing, lift) voltages per leg.  Ground
    contact goes through each leg's suspension spring.
    """
    _check_dt(dt)
    body = state.body_array()
    legs = np.asarray(state.legs, dtype=float)
    V = np.asarray(u, dtype=float).reshape(N_LEGS, 2)
    noise = np.zeros((N_LEGS, 2)) if tau_noise is None else np.asarray(tau_noise, float)
    surf = rparams.effective_surface(surface).packed()
    body_out = np.empty(6)
    legs_out = np.empty((N_LEGS, 4))
    contacts = np.empty((N_LEGS, 8))
    _k_robot_step(body, legs, V, surf, dt, tparams.packed(), kin.packed(),
                  rparams.packed(), float(heading), noise, body_out, legs_out, contacts)
    if not (np.all(np.isfinite(body_out)) and np.all(np.isfinite(legs_out))):
        raise NonFinite("robot state diverged")
    new_state = RobotState.from_arrays(body_out, legs_out)
    if return_contacts:
        return new_state, contacts
    return new_state


def static_deflection(tparams, V_s, V_l, tau_s=0.0, tau_l=0.0):
    """Equilibrium (q_s, q_l) for constant voltages and tip torques."""
    from scipy.optimize import fsolve

    p = tparams.packed()

    def residual(q):
        a_s, a_l = _k_trans_accel(q[0], 0.0, q[1], 0.0, V_s, V_l, tau_s, tau_l, p)
        # force balance in mm of spring deflection keeps fsolve well scaled
        return [a_s * p[1] / p[0], a_l * p[6] / p[5]]

    guess = [tparams.swing.volt_gain * V_s, tparams.lift.volt_gain * V_l]
    sol = fsolve(residual, guess, xtol=1e-12)
    return float(sol[0]), float(sol[1])


def settle_robot(surface=SurfaceModel(), tparams=TransmissionParams(),
                 kin=KinematicsParams(), rparams=RobotParams()):
    """Static standing posture with zero drive voltage.

    The body is level and each leg carries a quarter of the weight; the
    lift actuators deflect under that load.
    """
    from scipy.optimize import fsolve

    eff = rparams.effective_surface(surface)
    load = rparams.weight / N_LEGS

    def unknowns_residual(v):
        z, q_l = v
        j22 = kin.gain_z * (1.0 + 2.0 * kin.quad * q_l)
        a_s, a_l = _k_trans_accel(0.0, 0.0, q_l, 0.0, 0.0, 0.0, 0.0, -j22 * load,
                                  tparams.packed())
        _, l_z = _k_fk(0.0, q_l, kin.packed())
        tip_z = z - (rparams.leg_length + l_z)
        fn = eff.k_n * (eff.height - tip_z)
        return [fn - load, a_l * tparams.lift.mass]

    z0 = eff.height + rparams.leg_length + load / eff.k_n
    z, q_l = fsolve(unknowns_residual, [z0, 0.0], xtol=1e-12)
    legs = np.zeros((N_LEGS, 4))
    legs[:, 2] = q_l
    return RobotState(z_b=float(z), legs=legs)
