"""Fused, compiled control loop: plant, encoders, Kalman filters, LQR.

One call runs a whole trial.  Each control tick:

1. predict every transmission's state from the previous estimate and
   the previous measured voltages;
2. command ``u0 + drive + L (ref - prediction)``, clipped to the drive
   range;
3. sample both encoders of every transmission at the true tip velocity
   with the new voltages applied;
4. correct the estimates with the offset-free measurements;
5. integrate the plant over the tick with ``substeps`` physics steps.

Per-tick noise is drawn up front from a seeded generator so the loop
itself is deterministic.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..plant import _k_fk, _k_robot_step
from ..sensor import _k_encoder, _k_mech_current

# per-leg record columns
C_Q = 0  # 4: true q_s, qdot_s, q_l, qdot_l
C_QHAT = 4  # 4: estimate
C_QREF = 8  # 4: reference
C_VCMD = 12  # 2: commanded swing, lift
C_V = 14  # 2: measured V (offset removed)
C_VM = 16  # 2: measured V_m (offset removed)
C_IM = 18  # 2: mechanical current, mA
C_TIPVX = 20
C_CONTACT = 21
C_FN = 22
C_LEG = 23  # 2: true l_x, l_z of the transmission output
C_LEGHAT = 25  # 2: estimated l_x, l_z through the model kinematics
C_SAT = 27
N_COLS = 28

DIVERGENCE_LIMIT = 10.0  # mm, any actuator deflection beyond this is a blow-up


@njit(cache=True)
def _k_run(n_ticks, substeps, dt, body0, legs0, surf, tp, kin, kin_model, rp, body_fixed,
           ref, drive, L, u0, v_min, v_max,
           A, B, H, D, K, x0, fu0, q_clamp,
           sens_true, sens_cal, off_true, off_cal, sig_vm, sig_v,
           meas_noise, tau_noise, compliance, rec_body, rec_leg):
    h = dt / substeps
    period = ref.shape[1]
    body = body0.copy()
    legs = legs0.copy()
    body_next = np.empty(6)
    legs_next = np.empty((4, 4))
    contacts = np.empty((4, 8))
    first = np.empty((4, 8))
    xh = np.zeros((4, 6))
    u_prev = np.zeros((4, 4))  # measured [V_s, V_l, V_s', V_l'] of previous tick
    vm_prev = np.zeros((4, 2))
    v_prev = np.zeros((4, 2))
    v_cmd_prev = np.zeros((4, 2))
    prior = np.zeros(6)
    uk = np.zeros(4)
    y = np.zeros(4)
    innov = np.zeros(4)
    V = np.zeros((4, 2))
    tau = np.zeros((4, 2))

    for k in range(n_ticks):
        j = k % period
        for i in range(4):
            for r in range(6):
                acc = x0[i, r]
                for c in range(6):
                    acc += A[i, r, c] * (xh[i, c] - x0[i, c])
                for c in range(4):
                    acc += B[i, r, c] * (u_prev[i, c] - fu0[i, c])
                prior[r] = acc
            sat = 0.0
            for a in range(2):
                u = u0[i, a] + drive[i, j, a]
                for c in range(4):
                    u += L[i, a, c] * (ref[i, j, c] - prior[c])
                if u > v_max:
                    u = v_max
                    sat = 1.0
                elif u < v_min:
                    u = v_min
                    sat = 1.0
                V[i, a] = u

            # encoders
            for a in range(2):
                ch = 2 * i + a
                qdot = legs[i, 1 + 2 * a]
                vm = _k_encoder(qdot, V[i, a], v_cmd_prev[i, a], sens_true[ch])
                vm += off_true[ch, 0] + sig_vm * meas_noise[k, ch, 0]
                vmeas = V[i, a] + off_true[ch, 1] + sig_v * meas_noise[k, ch, 1]
                vm_c = vm - off_cal[ch, 0]
                v_c = vmeas - off_cal[ch, 1]
                i_m = _k_mech_current(vm_c, v_c, (v_c - v_prev[i, a]) / dt, sens_cal[ch])
                uk[a] = v_c
                uk[2 + a] = v_prev[i, a]
                y[a] = vm_c
                y[2 + a] = vm_prev[i, a]
                rec_leg[k, i, C_V + a] = v_c
                rec_leg[k, i, C_VM + a] = vm_c
                rec_leg[k, i, C_IM + a] = i_m
                vm_prev[i, a] = vm_c
                v_prev[i, a] = v_c
                v_cmd_prev[i, a] = V[i, a]

            # Kalman correction
            for r in range(4):
                acc = y[r]
                for c in range(6):
                    acc -= H[i, r, c] * prior[c]
                for c in range(4):
                    acc -= D[i, r, c] * uk[c]
                innov[r] = acc
            for r in range(6):
                acc = prior[r]
                for c in range(4):
                    acc += K[i, r, c] * innov[c]
                xh[i, r] = acc
            for c in range(4):
                u_prev[i, c] = uk[c]

            for c in range(4):
                rec_leg[k, i, C_Q + c] = legs[i, c]
                rec_leg[k, i, C_QHAT + c] = xh[i, c]
                rec_leg[k, i, C_QREF + c] = ref[i, j, c]
            rec_leg[k, i, C_VCMD] = V[i, 0]
            rec_leg[k, i, C_VCMD + 1] = V[i, 1]
            rec_leg[k, i, C_SAT] = sat
            qs = min(max(xh[i, 0], -q_clamp), q_clamp)
            ql = min(max(xh[i, 2], -q_clamp), q_clamp)
            lx, lz = _k_fk(qs, ql, kin_model)
            rec_leg[k, i, C_LEGHAT] = lx
            rec_leg[k, i, C_LEGHAT + 1] = lz
            tau[i, 0] = tau_noise[k, i, 0]
            tau[i, 1] = tau_noise[k, i, 1]

        for c in range(6):
            rec_body[k, c] = body[c]

        # physics
        for s in range(substeps):
            _k_robot_step(body, legs, V, surf, h, tp, kin, rp, 1.0, tau,
                          body_next, legs_next, contacts)
            if s == 0:
                first[:, :] = contacts
            if not body_fixed:
                body[:] = body_next
            legs[:, :] = legs_next

        for i in range(4):
            rec_leg[k, i, C_TIPVX] = first[i, 6]
            rec_leg[k, i, C_CONTACT] = first[i, 2]
            rec_leg[k, i, C_FN] = first[i, 1]
            lx, lz = _k_fk(rec_leg[k, i, C_Q], rec_leg[k, i, C_Q + 2], kin)
            # flexure give between actuators and tip under the contact load
            ct = math.cos(rec_body[k, 2])
            st = math.sin(rec_body[k, 2])
            ft = first[i, 0]
            fn = first[i, 1]
            rec_leg[k, i, C_LEG] = lx + compliance * (ct * ft + st * fn)
            rec_leg[k, i, C_LEG + 1] = lz + compliance * (st * ft - ct * fn)

        for i in range(4):
            for c in range(4):
                v = legs[i, c]
                if not math.isfinite(v):
                    return k
            if abs(legs[i, 0]) > DIVERGENCE_LIMIT or abs(legs[i, 2]) > DIVERGENCE_LIMIT:
                return k
        for c in range(6):
            if not math.isfinite(body[c]):
                return k
    return -1


@dataclass
class LoopInputs:
    """Everything the compiled loop needs, as plain arrays."""

    n_ticks: int
    substeps: int
    dt: float
    body0: np.ndarray
    legs0: np.ndarray
    surface: np.ndarray  # packed effective surface
    transmission: np.ndarray
    kinematics: np.ndarray
    kinematics_model: np.ndarray  # map the estimator assumes
    robot: np.ndarray
    body_fixed: bool
    ref: np.ndarray  # (4, P, 4)
    drive: np.ndarray  # (4, P, 2)
    L: np.ndarray  # (4, 2, 4)
    u0: np.ndarray  # (4, 2)
    v_min: float
    v_max: float
    A: np.ndarray
    B: np.ndarray
    H: np.ndarray
    D: np.ndarray
    K: np.ndarray
    x0: np.ndarray
    fu0: np.ndarray
    q_clamp: float
    sens_true: np.ndarray  # (8, 6)
    sens_cal: np.ndarray  # (8, 6)
    off_true: np.ndarray  # (8, 2)
    off_cal: np.ndarray  # (8, 2)
    sig_vm: float
    sig_v: float
    meas_noise: np.ndarray  # (n, 8, 2) standard normal
    tau_noise: np.ndarray  # (n, 4, 2) mN
    output_compliance: float = 0.0  # mm/mN, seen only by the true leg pose


@dataclass
class LoopResult:
    body: np.ndarray  # (n, 6)
    legs: np.ndarray  # (n, 4, N_COLS)
    diverged_at: int  # -1 when the run completed

    @property
    def diverged(self):
        return self.diverged_at >= 0


def run_loop(inp):
    n = inp.n_ticks
    rec_body = np.full((n, 6), np.nan)
    rec_leg = np.full((n, 4, N_COLS), np.nan)
    f = np.ascontiguousarray
    status = _k_run(
        n, inp.substeps, inp.dt, f(inp.body0, float), f(inp.legs0, float),
        f(inp.surface, float), f(inp.transmission, float), f(inp.kinematics, float),
        f(inp.kinematics_model, float),
        f(inp.robot, float), bool(inp.body_fixed),
        f(inp.ref, float), f(inp.drive, float), f(inp.L, float), f(inp.u0, float),
        float(inp.v_min), float(inp.v_max),
        f(inp.A, float), f(inp.B, float), f(inp.H, float), f(inp.D, float),
        f(inp.K, float), f(inp.x0, float), f(inp.fu0, float), float(inp.q_clamp),
        f(inp.sens_true, float), f(inp.sens_cal, float), f(inp.off_true, float),
        f(inp.off_cal, float), float(inp.sig_vm), float(inp.sig_v),
        f(inp.meas_noise, float), f(inp.tau_noise, float), float(inp.output_compliance),
        rec_body, rec_leg,
    )
    return LoopResult(rec_body, rec_leg, int(status))
