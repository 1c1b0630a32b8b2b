"""Piezoelectric encoder: forward circuit simulation and the inverted,
discrete measurement model used by the estimator.

The encoder reads the voltage before (``V_m``) and after (``V``) a shunt
resistor.  Kirchhoff's law on the shunt + actuator (R || C || current
source) gives the mechanical current, which is proportional to tip
velocity.  Time derivatives of V use the backward difference
``(V_k - V_{k-1}) / dt`` throughout, so the forward simulation and the
inverse model share one discretization.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DegenerateParams
from .units import CAP_CURRENT_TO_MA


@dataclass(frozen=True)
class SensorParams:
    alpha: float = 40.0  # mm/s per mA
    R: float = 1000.0  # kOhm
    C: float = 5.0  # nF
    R_s: float = 75.0  # kOhm
    beta: float = 1.57
    dt: float = 4e-4  # s

    def __post_init__(self):
        for name in ("alpha", "R", "C", "R_s", "beta", "dt"):
            if not getattr(self, name) > 0:
                raise DegenerateParams(f"sensor parameter {name} must be > 0")

    @property
    def c1(self):
        return self.alpha / self.R_s

    @property
    def c2(self):
        return self.alpha / self.R

    @property
    def c3(self):
        return self.alpha * self.beta * self.C * CAP_CURRENT_TO_MA / self.dt

    def packed(self):
        return np.array([self.alpha, self.R, self.C, self.R_s, self.beta, self.dt])


@dataclass(frozen=True)
class EncoderSample:
    V_m: float
    V: float


@dataclass(frozen=True)
class MeasurementModel:
    """Per-actuator model ``[V_m_k, V_m_{k-1}] = H x + D [V_k, V_{k-1}] + n``.

    ``x = [q_k, qdot_k, qdot_{k-1}]``.
    """

    H_m: np.ndarray
    D_m: np.ndarray
    N_m: np.ndarray


@njit(cache=True)
def _k_encoder(qdot, V, V_prev, sp):
    i_total = qdot / sp[0] + sp[4] * sp[2] * 1e-6 * (V - V_prev) / sp[5] + V / sp[1]
    return V + sp[3] * i_total


@njit(cache=True)
def _k_mech_current(V_m, V, V_dot, sp):
    return (V_m - V) / sp[3] - sp[4] * sp[2] * 1e-6 * V_dot - V / sp[1]


def mechanical_current(sample, V_dot, params=SensorParams()):
    """Mechanical current in mA from one encoder sample and dV/dt (V/s)."""
    return _k_mech_current(float(sample.V_m), float(sample.V), float(V_dot), params.packed())


def simulate_encoder(qdot, V, V_prev, params=SensorParams(), noise=None,
                     noise_std=(0.0, 0.0)):
    """Encoder reading for tip velocity ``qdot`` (mm/s) and drive ``V``.

    ``noise`` is a numpy Generator; when given, independent Gaussian noise
    with standard deviations ``noise_std = (sigma_Vm, sigma_V)`` is added
    to the two channels.
    """
    V_m = _k_encoder(float(qdot), float(V), float(V_prev), params.packed())
    V_meas = float(V)
    if noise is not None:
        V_m += noise.normal(0.0, noise_std[0])
        V_meas += noise.normal(0.0, noise_std[1])
    return EncoderSample(float(V_m), V_meas)


def measurement_coefficients(params):
    return params.c1, params.c2, params.c3


def build_measurement_model(params, N_H, N_D):
    """Invert the encoder into ``(H_m, D_m, N_m)``.

    The first row comes from the backward-difference equation at step k.
    The second row is the step k-1 equation that reuses the same
    difference ``V_k - V_{k-1}`` for the derivative at k-1; solving it for
    ``V_m_{k-1}`` gives ``d22 = (c1 + c2 - c3) / c1``.
    """
    c1, c2, c3 = measurement_coefficients(params)
    if c1 == 0.0:
        raise DegenerateParams("c1 = alpha / R_s must be nonzero")
    H_m = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]) / c1
    D_m = np.array([[c1 + c2 + c3, -c3], [c3, c1 + c2 - c3]]) / c1
    N_H = np.asarray(N_H, dtype=float)
    N_D = np.asarray(N_D, dtype=float)
    N_m = N_H + D_m @ N_D @ D_m.T
    return MeasurementModel(H_m, D_m, 0.5 * (N_m + N_m.T))


def velocity_from_encoder(V_m, V, V_prev, params=SensorParams()):
    """First row of the inverse model solved for qdot_k (mm/s)."""
    c1, c2, c3 = measurement_coefficients(params)
    return c1 * (V_m - V) - c2 * V - c3 * (V - V_prev)
