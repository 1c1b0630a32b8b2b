"""LQR tracking with feed-forward for one transmission."""

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, NonPositiveWeight, RankDeficient, Unstabilizable
from .riccati import solve_dare, spectral_radius


@dataclass(frozen=True)
class CostWeights:
    k_p: float = 1.0  # 1/mm^2
    k_d: float = 1.0  # s^2/mm^2
    k_u: float = 1.0  # 1/V^2

    def __post_init__(self):
        for name in ("k_p", "k_d", "k_u"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0.0):
                raise NonPositiveWeight(f"{name} must be > 0, got {value}")


@dataclass(frozen=True)
class ControlLaw:
    L: np.ndarray  # 2x4
    u0: np.ndarray  # 2
    u_t: np.ndarray  # (period, 2) feed-forward offsets, may be empty
    v_min: float = -np.inf
    v_max: float = np.inf

    def with_feedforward(self, u_t):
        return ControlLaw(self.L, self.u0, np.asarray(u_t, dtype=float), self.v_min, self.v_max)

    def with_limits(self, v_min, v_max):
        return ControlLaw(self.L, self.u0, self.u_t, float(v_min), float(v_max))

    def without_feedback(self):
        return ControlLaw(np.zeros_like(self.L), self.u0, self.u_t, self.v_min, self.v_max)


def build_cost(weights):
    """Diagonal state and input weights from the three scalars."""
    if not isinstance(weights, CostWeights):
        weights = CostWeights(*weights)
    Q = np.diag([weights.k_p, weights.k_d, weights.k_p, weights.k_d])
    R = np.diag([weights.k_u, weights.k_u])
    return Q, R


def compute_lqr_gain(proc, Q, R):
    """Infinite-horizon gain ``L = (R + B'SB)^{-1} B'SA`` for the process model."""
    A, B = proc.A_p, proc.B_p
    try:
        S = solve_dare(A, B, Q, R)
    except NonConvergence as exc:
        raise Unstabilizable(str(exc)) from exc
    L = np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
    if spectral_radius(A - B @ L) >= 1.0:
        raise Unstabilizable("closed loop is not stable")
    return ControlLaw(L, np.array(proc.u0, dtype=float), np.zeros((0, B.shape[1])))


def control_step(law, x_ref, x_hat_p, k):
    """Voltage command and saturation flag at tick ``k``.

    ``u_t`` is indexed modulo its length; an empty ``u_t`` means no
    feed-forward.
    """
    u = law.u0 + law.L @ (np.asarray(x_ref, dtype=float) - np.asarray(x_hat_p, dtype=float))
    if len(law.u_t):
        u = u + law.u_t[k % len(law.u_t)]
    clipped = np.clip(u, law.v_min, law.v_max)
    return clipped, bool(np.any(clipped != u))


def feedforward_from_reference(proc, x_ref):
    """Per-step least-squares inversion of the model along a periodic reference.

    Returns ``u_t[k]`` minimising
    ``|x_ref[k+1] - x0 - A (x_ref[k] - x0) - B u_t[k]|`` with indices
    wrapping at the period.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    B = proc.B_p
    if np.linalg.matrix_rank(B) < B.shape[1]:
        raise RankDeficient("input matrix is rank deficient")
    dev = x_ref - proc.x0
    target = np.roll(dev, -1, axis=0) - dev @ proc.A_p.T
    u_t, *_ = np.linalg.lstsq(B, target.T, rcond=None)
    return u_t.T
