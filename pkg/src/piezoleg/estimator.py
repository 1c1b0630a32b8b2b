"""Augmented transmission/encoder system and the constant-gain Kalman filter.

State ``x = [q_s, qdot_s, q_l, qdot_l, qdot_s(k-1), qdot_l(k-1)]``,
measurement ``y = [V_m_s(k), V_m_l(k), V_m_s(k-1), V_m_l(k-1)]``,
input ``u_k = [V_s(k), V_l(k), V_s(k-1), V_l(k-1)]``.

Input packing: ``u_k`` stacks the current and previous voltage pairs, so
``B u_{k-1}`` only sees ``(V_s, V_l)`` at k-1 (the right block of B is
zero) and ``D u_k`` sees the pairs at k and k-1, which is exactly what the
encoder equations need.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergence, NonFinite, Undetectable
from .plant import KinematicsParams, LegPose, _k_fk
from .riccati import solve_dare, spectral_radius

N_STATE = 6
N_MEAS = 4

NOISELESS_EPS = 1e-12
CLAMP_FACTOR = 1.5


@dataclass(frozen=True)
class AugmentedSystem:
    A: np.ndarray  # 6x6
    B: np.ndarray  # 6x4
    H: np.ndarray  # 4x6
    D: np.ndarray  # 4x4
    W: np.ndarray  # 6x6
    N: np.ndarray  # 4x4
    x0: np.ndarray  # 6, operating point
    u0: np.ndarray  # 4, operating voltages stacked twice

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("A", "B", "H", "D", "W", "N", "x0", "u0")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: np.array(d[k], dtype=float) for k in ("A", "B", "H", "D", "W", "N", "x0", "u0")})


@dataclass
class FilterState:
    x_hat: np.ndarray
    u_prev: np.ndarray  # input vector u_{k-1} (4,)

    @classmethod
    def initial(cls, u_init=None):
        u = np.zeros(4) if u_init is None else np.asarray(u_init, dtype=float)
        return cls(np.zeros(N_STATE), u)


def build_augmented_system(proc, meas_swing, meas_lift=None):
    """Stack one process model and the two encoders of its transmission."""
    meas_lift = meas_swing if meas_lift is None else meas_lift
    if proc.A_p.shape != (4, 4) or proc.B_p.shape != (4, 2):
        raise DimensionMismatch("process model must be 4-state, 2-input")
    for m in (meas_swing, meas_lift):
        if m.H_m.shape != (2, 3) or m.D_m.shape != (2, 2) or m.N_m.shape != (2, 2):
            raise DimensionMismatch("measurement model must be 2x3 / 2x2 / 2x2")

    A = np.zeros((6, 6))
    A[:4, :4] = proc.A_p
    A[4, 1] = 1.0
    A[5, 3] = 1.0

    B = np.zeros((6, 4))
    B[:4, :2] = proc.B_p

    # rows: V_m_s(k), V_m_l(k), V_m_s(k-1), V_m_l(k-1)
    H = np.zeros((4, 6))
    H[0, 1] = meas_swing.H_m[0, 1]
    H[1, 3] = meas_lift.H_m[0, 1]
    H[2, 4] = meas_swing.H_m[1, 2]
    H[3, 5] = meas_lift.H_m[1, 2]

    D = np.zeros((4, 4))
    for axis, m in ((0, meas_swing), (1, meas_lift)):
        D[axis, axis] = m.D_m[0, 0]
        D[axis, axis + 2] = m.D_m[0, 1]
        D[axis + 2, axis] = m.D_m[1, 0]
        D[axis + 2, axis + 2] = m.D_m[1, 1]

    W = np.zeros((6, 6))
    W[:4, :4] = proc.W_p

    # each encoder's 2x2 covariance sits on its (k, k-1) rows
    N = np.zeros((4, 4))
    for axis, m in ((0, meas_swing), (1, meas_lift)):
        idx = [axis, axis + 2]
        N[np.ix_(idx, idx)] = m.N_m

    x0 = np.concatenate([proc.x0, [proc.x0[1], proc.x0[3]]])
    u0 = np.concatenate([proc.u0, proc.u0])
    return AugmentedSystem(A, B, H, D, W, N, x0, u0)


def compute_kalman_gain(sys, return_covariance=False):
    """Steady-state gain ``K = P H'(H P H' + N)^{-1}``.

    ``P`` is the a-priori error covariance from the dual DARE.
    """
    N = sys.N.copy()
    trace = float(np.trace(N))
    if np.linalg.eigvalsh(N).min() <= 0.0:
        N = N + NOISELESS_EPS * max(trace, 1.0) * np.eye(N.shape[0])
    _check_detectable(sys.A, sys.H)
    try:
        P = solve_dare(sys.A.T, sys.H.T, sys.W, N)
    except NonConvergence:
        raise
    S = sys.H @ P @ sys.H.T + N
    K = np.linalg.solve(S, sys.H @ P).T
    if return_covariance:
        return K, P
    return K


def _check_detectable(A, H, tol=1e-9):
    vals, vecs = np.linalg.eig(A)
    for lam, v in zip(vals, vecs.T):
        if abs(lam) >= 1.0 - tol:
            if np.linalg.norm(H @ v) < tol * np.linalg.norm(v):
                raise Undetectable(f"unstable mode {lam} is unobservable")


def estimator_spectral_radius(sys, K):
    return spectral_radius((np.eye(sys.A.shape[0]) - K @ sys.H) @ sys.A)


def predict(state, sys):
    """One-step prediction ``A x_{k-1} + B u_{k-1}`` about the operating point."""
    return sys.x0 + sys.A @ (state.x_hat - sys.x0) + sys.B @ (state.u_prev - sys.u0)


def kalman_update(state, sys, K, u_k, y_k):
    """Fused predict/correct step returning the new FilterState.

    ``u_k = [V_s(k), V_l(k), V_s(k-1), V_l(k-1)]`` and ``y_k`` are the
    encoder readings at step k.
    """
    y_k = np.asarray(y_k, dtype=float)
    u_k = np.asarray(u_k, dtype=float)
    if not (np.all(np.isfinite(y_k)) and np.all(np.isfinite(u_k))):
        raise NonFinite("non-finite measurement")
    prior = predict(state, sys)
    innovation = y_k - sys.H @ prior - sys.D @ u_k
    return FilterState(prior + K @ innovation, u_k)


def innovation(state, sys, u_k, y_k):
    prior = predict(state, sys)
    return np.asarray(y_k) - sys.H @ prior - sys.D @ np.asarray(u_k)


def estimate_leg_pose(x_hat, kin=KinematicsParams(), q_max=0.15):
    """Leg pose from the position entries of an estimate, clamped to 1.5x the box."""
    x = x_hat.x_hat if isinstance(x_hat, FilterState) else np.asarray(x_hat)
    bound = CLAMP_FACTOR * q_max
    q_s = float(np.clip(x[0], -bound, bound))
    q_l = float(np.clip(x[2], -bound, bound))
    l_x, l_z = _k_fk(q_s, q_l, kin.packed())
    return LegPose(l_x, l_z)
