import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piezoleg.errors import DegenerateParams
from piezoleg.sensor import (EncoderSample, SensorParams, build_measurement_model,
                             mechanical_current, simulate_encoder, velocity_from_encoder)

P = SensorParams()
finite = st.floats(-200, 200, allow_nan=False)


def test_current_of_zero_sample():
    assert mechanical_current(EncoderSample(0.0, 0.0), 0.0) == 0.0


def test_current_through_shunt_only():
    assert mechanical_current(EncoderSample(1.0, 0.0), 0.0) == pytest.approx(1.0 / 75.0)


def test_encoder_at_rest():
    assert simulate_encoder(0.0, 0.0, 0.0).V_m == 0.0


def test_encoder_static_voltage():
    V0 = 60.0
    s = simulate_encoder(0.0, V0, V0)
    assert s.V_m == pytest.approx(V0 * (1.0 + P.R_s / P.R), rel=1e-14)


def test_encoder_noise_covariance():
    rng = np.random.default_rng(11)
    sig = (0.5, 0.1)
    samples = np.array([[s.V_m, s.V] for s in
                        (simulate_encoder(0.0, 0.0, 0.0, noise=rng, noise_std=sig)
                         for _ in range(1000))])
    var = samples.var(axis=0)
    assert var[0] == pytest.approx(sig[0] ** 2, rel=0.15)
    assert var[1] == pytest.approx(sig[1] ** 2, rel=0.15)


def test_round_trip_recovers_velocity():
    dt = P.dt
    t = np.arange(251) * dt
    qdot = 3.0 * np.cos(2 * np.pi * 10 * t)
    V = 80.0 * np.sin(2 * np.pi * 10 * t)
    for k in range(1, len(t)):
        s = simulate_encoder(qdot[k], V[k], V[k - 1])
        i_m = mechanical_current(s, (V[k] - V[k - 1]) / dt)
        assert P.alpha * i_m == pytest.approx(qdot[k], rel=1e-6, abs=1e-9)
        assert velocity_from_encoder(s.V_m, V[k], V[k - 1]) == pytest.approx(
            qdot[k], rel=1e-6, abs=1e-9)


def test_position_is_not_measured():
    m = build_measurement_model(P, np.eye(2), np.eye(2))
    assert np.all(m.H_m[:, 0] == 0.0)


def test_noiseless_drive_channel():
    N_H = np.array([[0.3, 0.1], [0.1, 0.3]])
    m = build_measurement_model(P, N_H, np.zeros((2, 2)))
    np.testing.assert_array_equal(m.N_m, N_H)


def test_degenerate_shunt():
    with pytest.raises(DegenerateParams):
        SensorParams(R_s=0.0)


@settings(max_examples=100, deadline=None)
@given(q=finite, qd=finite, qd_prev=finite, V=finite, V_prev=finite)
def test_inverse_model_reproduces_encoder(q, qd, qd_prev, V, V_prev):
    m = build_measurement_model(P, np.eye(2), np.zeros((2, 2)))
    y = m.H_m @ [q, qd, qd_prev] + m.D_m @ [V, V_prev]
    now = simulate_encoder(qd, V, V_prev)
    # the delayed row reuses the difference V_k - V_{k-1} for the rate at k-1
    before = simulate_encoder(qd_prev, V_prev, 2.0 * V_prev - V)
    assert y[0] == pytest.approx(now.V_m, rel=1e-10, abs=1e-10)
    assert y[1] == pytest.approx(before.V_m, rel=1e-10, abs=1e-10)


def psd(draw_matrix):
    G = np.array(draw_matrix).reshape(2, 2)
    return G @ G.T


@settings(max_examples=100, deadline=None)
@given(a=st.lists(finite, min_size=4, max_size=4), b=st.lists(finite, min_size=4, max_size=4))
def test_noise_covariance_is_psd(a, b):
    m = build_measurement_model(P, psd(a), psd(b))
    scale = max(1.0, np.abs(m.N_m).max())
    assert np.linalg.eigvalsh(m.N_m).min() >= -1e-9 * scale
    np.testing.assert_array_equal(m.N_m, m.N_m.T)


@settings(max_examples=100, deadline=None)
@given(x=st.lists(finite, min_size=3, max_size=3), y=st.lists(finite, min_size=3, max_size=3),
       c=st.floats(-10, 10))
def test_current_is_linear(x, y, c):
    f = lambda v: mechanical_current(EncoderSample(v[0], v[1]), v[2])
    lhs = f(np.add(x, np.multiply(c, y)))
    rhs = f(x) + c * f(y)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
