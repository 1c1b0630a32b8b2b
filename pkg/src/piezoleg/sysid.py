"""Identification of a four-state discrete linear model of one transmission.

The surrogate plant exposes its full state, so the model is fitted by
one-step least squares on deviations from the data's mean operating
point rather than by output-only subspace methods.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, InvalidRange, RankDeficient, UnstableFit
from .riccati import spectral_radius

log = logging.getLogger(__name__)

STABILITY_MARGIN = 0.999


@dataclass(frozen=True)
class ResponseDataset:
    inputs: np.ndarray  # (n, 2) volts
    states: np.ndarray  # (n, 4) mm, mm/s
    dt: float

    def __post_init__(self):
        u = np.asarray(self.inputs, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if u.ndim != 2 or x.ndim != 2 or u.shape[0] != x.shape[0]:
            raise EmptyDataset("inputs and states must be 2-D with equal length")
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "states", x)

    def __len__(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class ProcessModel:
    A_p: np.ndarray
    B_p: np.ndarray
    W_p: np.ndarray
    x0: np.ndarray
    u0: np.ndarray
    dt: float
    seed: int = -1

    def predict(self, x, u):
        return self.x0 + self.A_p @ (x - self.x0) + self.B_p @ (u - self.u0)

    def to_dict(self):
        return {
            "A_p": self.A_p.tolist(),
            "B_p": self.B_p.tolist(),
            "W_p": self.W_p.tolist(),
            "x0": self.x0.tolist(),
            "u0": self.u0.tolist(),
            "dt": self.dt,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            A_p=np.array(d["A_p"], dtype=float),
            B_p=np.array(d["B_p"], dtype=float),
            W_p=np.array(d["W_p"], dtype=float),
            x0=np.array(d["x0"], dtype=float),
            u0=np.array(d["u0"], dtype=float),
            dt=float(d["dt"]),
            seed=int(d.get("seed", -1)),
        )


def design_excitation(freq_range, amplitude, duration, dt, seed, n_channels=2):
    """Random-phase multisine on the FFT grid inside ``freq_range``.

    Each channel gets its own phases; the peak of every channel is scaled
    to ``amplitude`` volts.
    """
    f_lo, f_hi = freq_range
    nyquist = 0.5 / dt
    if not (0.0 < f_lo < f_hi <= nyquist):
        raise InvalidRange(f"need 0 < f_lo < f_hi <= {nyquist} Hz, got {freq_range}")
    if duration < 20.0 / f_lo:
        raise InvalidRange(f"duration {duration} s shorter than 20 periods of {f_lo} Hz")
    n = int(round(duration / dt))
    freqs = np.fft.rfftfreq(n, dt)
    band = (freqs >= f_lo) & (freqs <= f_hi)
    rng = np.random.default_rng(seed)
    out = np.empty((n, n_channels))
    for ch in range(n_channels):
        spectrum = np.zeros(freqs.size, dtype=complex)
        phases = rng.uniform(0.0, 2.0 * np.pi, band.sum())
        spectrum[band] = np.exp(1j * phases)
        signal = np.fft.irfft(spectrum, n)
        out[:, ch] = amplitude * signal / np.abs(signal).max()
    return out


def fit_linear_model(data, seed=-1, min_input_rank=4):
    """Least-squares fit of ``x+ - x0 = A (x - x0) + B (u - u0)``.

    ``u0`` is the mean input and ``x0`` the fixed point of the fitted
    affine map at ``u0``.  The process-noise covariance is the covariance
    of the one-step residuals.

    Raises:
        RankDeficient: the regressor matrix is not full rank (for example
            a zero-input dataset).
    """
    if len(data) < 100:
        raise EmptyDataset(f"need at least 100 samples, got {len(data)}")
    x_mean = data.states.mean(axis=0)
    u0 = data.inputs.mean(axis=0)
    dx = data.states - x_mean
    du = data.inputs - u0
    if np.linalg.matrix_rank(du, tol=1e-9 * max(1.0, np.abs(data.inputs).max())) < du.shape[1]:
        raise RankDeficient("inputs are not exciting every channel")
    n = dx.shape[1]
    # the intercept absorbs the finite-sample mismatch between the mean
    # of x_k and of x_{k+1}; the fixed point is recovered from it below
    regressors = np.hstack([dx[:-1], du[:-1], np.ones((len(dx) - 1, 1))])
    # column scaling keeps positions (~0.1 mm) and velocities (~100 mm/s)
    # on a comparable footing for the rank test and the solve
    scale = np.abs(regressors).max(axis=0)
    scale[scale == 0.0] = 1.0
    Z = regressors / scale
    sv = np.linalg.svd(Z, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficient("regressors are not persistently exciting")
    theta, *_ = np.linalg.lstsq(Z, dx[1:], rcond=None)
    theta = (theta / scale[:, None]).T
    A_p = theta[:, :n]
    B_p = theta[:, n:-1]
    offset = theta[:, -1]
    residuals = dx[1:] - regressors @ theta.T
    W_p = np.cov(residuals, rowvar=False, bias=True)
    W_p = 0.5 * (W_p + W_p.T)
    try:
        x0 = x_mean + np.linalg.solve(np.eye(n) - A_p, offset)
    except np.linalg.LinAlgError as exc:
        raise UnstableFit("identified model has a unit eigenvalue") from exc

    rho = spectral_radius(A_p)
    if rho >= 1.0:
        log.warning("identified model unstable (rho=%.6f); shrinking eigenvalues", rho)
        A_p = _shrink_unstable(A_p)
        if spectral_radius(A_p) >= 1.0:
            raise UnstableFit("could not stabilize identified model")
    return ProcessModel(A_p, B_p, W_p, x0, u0, data.dt, seed)


def _shrink_unstable(A):
    vals, vecs = np.linalg.eig(A)
    mags = np.abs(vals)
    big = mags >= STABILITY_MARGIN
    vals = np.where(big, vals / mags * STABILITY_MARGIN, vals)
    return np.real(vecs @ np.diag(vals) @ np.linalg.inv(vecs))


def simulate_model(model, x_init, inputs):
    """Open-loop response of the linear model to an input sequence."""
    inputs = np.asarray(inputs, dtype=float)
    out = np.empty((inputs.shape[0], model.A_p.shape[0]))
    x = np.asarray(x_init, dtype=float)
    for k, u in enumerate(inputs):
        out[k] = x
        x = model.predict(x, u)
    return out


def prediction_error(model, data, horizon=1):
    """RMS of ``horizon``-step open-loop prediction error over state RMS.

    Every sample with enough future data starts a prediction; the error
    is measured at its endpoint.  Both numerator and denominator are
    taken about the model's fixed point, so a zero model scores 1.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = len(data)
    if n <= horizon:
        raise EmptyDataset("dataset shorter than the prediction horizon")
    x = data.states[: n - horizon].copy()
    for j in range(horizon):
        u = data.inputs[j : n - horizon + j]
        x = model.x0 + (x - model.x0) @ model.A_p.T + (u - model.u0) @ model.B_p.T
    target = data.states[horizon:]
    err = target - x
    ref = target - model.x0
    denom = np.sqrt(np.mean(ref**2, axis=0))
    denom[denom == 0.0] = 1.0
    per_state = np.sqrt(np.mean(err**2, axis=0)) / denom
    return float(np.sqrt(np.mean(per_state**2)))
