import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piezoleg.errors import NonFinite, Undetectable
from piezoleg.estimator import (AugmentedSystem, FilterState, build_augmented_system,
                                compute_kalman_gain, estimate_leg_pose,
                                estimator_spectral_radius, kalman_update, predict)
from piezoleg.plant import KinematicsParams, LegPose, leg_kinematics
from piezoleg.sensor import SensorParams, build_measurement_model
from piezoleg.sysid import ProcessModel


def random_system(seed, noise_scale=1.0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    A *= rng.uniform(0.3, 0.95) / np.abs(np.linalg.eigvals(A)).max()
    B = rng.normal(size=(4, 2))
    G = rng.normal(size=(4, 4))
    proc = ProcessModel(A, B, G @ G.T, np.zeros(4), np.zeros(2), 4e-4)
    F = rng.normal(size=(2, 2))
    meas = build_measurement_model(SensorParams(), noise_scale * (F @ F.T + 0.1 * np.eye(2)),
                                   0.01 * np.eye(2))
    return build_augmented_system(proc, meas)


def scalar_system(A=0.5, H=1.0, W=1.0, N=1.0):
    one = lambda v: np.array([[v]], dtype=float)
    return AugmentedSystem(one(A), one(0.0), one(H), one(0.0), one(W), one(N),
                           np.zeros(1), np.zeros(1))


# -- structure -------------------------------------------------------------

def test_block_structure():
    sys = random_system(0)
    assert sys.A[4, 1] == 1.0 and sys.A[5, 3] == 1.0
    assert np.all(sys.A[4:, [0, 2, 4, 5]] == 0.0)
    assert np.all(sys.B[4:] == 0.0)
    assert np.all(sys.B[:, 2:] == 0.0)
    assert np.all(sys.W[4:, 4:] == 0.0)
    assert np.all(sys.H[:, [0, 2]] == 0.0)


def test_identified_filters_are_stable(bundle):
    for leg in bundle.legs:
        assert estimator_spectral_radius(leg.system, leg.K) < 1.0


# -- gain ------------------------------------------------------------------

def test_no_process_noise_gives_zero_gain():
    sys = dataclasses.replace(random_system(1), W=np.zeros((6, 6)))
    np.testing.assert_allclose(compute_kalman_gain(sys), 0.0, atol=1e-12)


def test_scalar_gain():
    K, P = compute_kalman_gain(scalar_system(), return_covariance=True)
    root = (0.25 + np.sqrt(4.0625)) / 2.0
    assert P[0, 0] == pytest.approx(root, abs=1e-10)
    assert K[0, 0] == pytest.approx(root / (root + 1.0), abs=1e-10)
    assert K[0, 0] == pytest.approx(0.5311, abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(A=st.floats(-0.99, 0.99), W=st.floats(0.01, 10), N=st.floats(0.01, 10))
def test_scalar_gain_falls_with_sensor_noise(A, W, N):
    k1 = compute_kalman_gain(scalar_system(A, 1.0, W, N))[0, 0]
    k2 = compute_kalman_gain(scalar_system(A, 1.0, W, 100 * N))[0, 0]
    assert abs(k2) <= abs(k1)


def test_gain_size_falls_with_sensor_noise():
    # entrywise monotonicity fails for multi-output systems; norms do not
    for seed in range(100):
        sys = random_system(seed)
        K1 = compute_kalman_gain(sys)
        K2 = compute_kalman_gain(dataclasses.replace(sys, N=100.0 * sys.N))
        assert np.linalg.norm(K2) <= np.linalg.norm(K1)
        assert np.linalg.norm(K2, 2) <= np.linalg.norm(K1, 2)
        assert np.trace(K2 @ sys.H) <= np.trace(K1 @ sys.H)


def test_undetectable_mode():
    sys = dataclasses.replace(scalar_system(A=1.2, H=0.0))
    with pytest.raises(Undetectable):
        compute_kalman_gain(sys)


def test_noiseless_channel_is_regularized():
    sys = random_system(2)
    N = sys.N.copy()
    N[1, :] = N[:, 1] = 0.0
    K = compute_kalman_gain(dataclasses.replace(sys, N=N))
    assert np.all(np.isfinite(K))


# -- update ----------------------------------------------------------------

def test_zero_stays_zero():
    sys = random_system(3)
    K = compute_kalman_gain(sys)
    s = kalman_update(FilterState.initial(), sys, K, np.zeros(4), np.zeros(4))
    np.testing.assert_array_equal(s.x_hat, np.zeros(6))


def test_zero_gain_is_open_loop_prediction():
    sys = random_system(4)
    rng = np.random.default_rng(0)
    s = FilterState(rng.normal(size=6), rng.normal(size=4))
    nxt = kalman_update(s, sys, np.zeros((6, 4)), rng.normal(size=4), rng.normal(size=4))
    np.testing.assert_allclose(nxt.x_hat, sys.A @ s.x_hat + sys.B @ s.u_prev, atol=1e-14)


def test_rejects_non_finite_measurement():
    sys = random_system(5)
    with pytest.raises(NonFinite):
        kalman_update(FilterState.initial(), sys, np.zeros((6, 4)), np.zeros(4),
                      [0.0, np.nan, 0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(-5, 5))
def test_update_superposition(seed, c):
    sys = random_system(seed % 1000)
    K = compute_kalman_gain(sys)
    rng = np.random.default_rng(seed)
    a = [rng.normal(size=n) for n in (6, 4, 4, 4)]
    b = [rng.normal(size=n) for n in (6, 4, 4, 4)]
    run = lambda v: kalman_update(FilterState(v[0], v[1]), sys, K, v[2], v[3]).x_hat
    mix = [x + c * y for x, y in zip(a, b)]
    np.testing.assert_allclose(run(mix), run(a) + c * run(b), rtol=1e-9, atol=1e-9)


def simulate_linear(sys, K, steps, seed):
    """Exact augmented plant with seeded noise; returns prior errors and innovations."""
    rng = np.random.default_rng(seed)
    n = sys.A.shape[0]
    w = rng.multivariate_normal(np.zeros(n), sys.W, steps)
    v = rng.multivariate_normal(np.zeros(4), sys.N, steps)
    u = rng.normal(0.0, 10.0, (steps, 4))
    x = np.zeros(n)
    state = FilterState.initial()
    errors = np.empty((steps, n))
    innov = np.empty((steps, 4))
    for k in range(steps):
        y = sys.H @ x + sys.D @ u[k] + v[k]
        prior = predict(state, sys)
        errors[k] = x - prior
        innov[k] = y - sys.H @ prior - sys.D @ u[k]
        state = kalman_update(state, sys, K, u[k], y)
        x = sys.A @ x + sys.B @ u[k] + w[k]
    return errors, innov


def lag1(series):
    s = series - series.mean()
    return float(np.dot(s[1:], s[:-1]) / np.dot(s, s))


def test_monte_carlo_matches_riccati_covariance(bundle):
    sys = bundle.legs[0].system
    K, P = compute_kalman_gain(sys, return_covariance=True)
    errors, innov = simulate_linear(sys, K, 50_000, seed=1)
    emp = np.var(errors[1000:], axis=0)
    np.testing.assert_allclose(emp, np.diag(P), rtol=0.10)
    for ch in range(4):
        assert abs(lag1(innov[1000:, ch])) < 0.05


def test_noiseless_estimate_converges():
    sys = random_system(6)
    sys = dataclasses.replace(sys, W=sys.W + np.diag([0, 0, 0, 0, 1e-3, 1e-3]))
    K = compute_kalman_gain(sys)
    rng = np.random.default_rng(0)
    x = rng.normal(size=6)
    x[4:] = 0.0
    state = FilterState.initial()
    err = []
    for k in range(200):
        u = rng.normal(size=4)
        y = sys.H @ x + sys.D @ u
        state = kalman_update(state, sys, K, u, y)
        err.append(np.linalg.norm(x - state.x_hat))
        x = sys.A @ x + sys.B @ u
    assert err[-1] < 1e-8 * max(1.0, err[0])


# -- leg pose --------------------------------------------------------------

def test_zero_estimate_is_neutral_pose():
    assert estimate_leg_pose(np.zeros(6)) == LegPose(0.0, 0.0)


def test_exact_estimate_has_no_leg_error():
    x = np.array([0.08, 0.0, -0.05, 0.0, 0.0, 0.0])
    assert estimate_leg_pose(x) == leg_kinematics(0.08, -0.05)


def test_estimate_is_clamped():
    far = estimate_leg_pose(np.array([5.0, 0, -5.0, 0, 0, 0]))
    edge = leg_kinematics(0.225, -0.225, KinematicsParams())
    assert far == edge
