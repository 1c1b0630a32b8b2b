import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piezoleg.errors import MissingBaselineData, NonPeriodicKeyframes, ParamOutOfRange
from piezoleg.gait import (FREQ_GRID, S1_GRID, S2_GRID, S3_GRID, GaitParams, Keyframes,
                           assign_leg_phases, gait_reference, keyframes_pronk, keyframes_trot,
                           sinusoid_reference, spline_reference)
from piezoleg.harness.sweep import grid

DT = 4e-4


def retraction_fraction(ref, n=20_000):
    """Share of the stride with negative swing velocity, on the spline itself."""
    t = np.arange(n) * (ref.period * ref.dt / n)
    return float(np.mean(ref.evaluate(t)[:, 1] < 0.0))


# -- parameters ------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [dict(S1=40.0), dict(S2=30.0), dict(S3=90.0), dict(T=0.2),
                                    dict(gait="walk"), dict(A_S=-1.0)])
def test_out_of_range_params(kwargs):
    with pytest.raises(ParamOutOfRange):
        GaitParams(**kwargs)


def test_grid_counts(config):
    assert len(grid(config, "trot")) == 100
    assert len(grid(config, "pronk")) == 100
    assert len(FREQ_GRID) * len(S1_GRID) * len(S2_GRID) == 100
    assert len(FREQ_GRID) * len(S1_GRID) * len(S3_GRID) == 100


# -- keyframes -------------------------------------------------------------

def test_even_split_is_isoceles_triangle():
    kf = keyframes_trot(GaitParams("trot", S1=50.0))
    (p0, v0), (p1, v1), (p2, v2) = kf.swing
    assert (p0, p1, p2) == (0.0, 0.5, 1.0)
    assert v0 == v2 == -v1


def test_retraction_window_and_lift_peak():
    p = GaitParams("trot", A_L=175.0, S1=70.0, S2=25.0)
    kf = keyframes_trot(p)
    assert kf.swing[1][0] == pytest.approx(0.70)
    assert max(v for _, v in kf.lift) == pytest.approx(0.25 * 0.175)


def test_reduced_adduction():
    kf = keyframes_trot(GaitParams("trot", A_L=175.0, S2=-75.0))
    stance = kf.lift[1]
    assert stance[1] == pytest.approx(-0.75 * 0.175)


def test_half_period_pronk():
    kf = keyframes_pronk(GaitParams("pronk", S3=50.0), ramp=0.0)
    lift = dict(kf.lift[:3])
    assert lift[0.0] > 0 and kf.lift[2] == (0.5, -0.075)


def test_pronk_shapes_mirror():
    P = 100
    a = gait_reference(GaitParams("pronk", T=P * DT, S3=20.0), DT).samples[:, 2]
    b = gait_reference(GaitParams("pronk", T=P * DT, S3=80.0), DT).samples[:, 2]
    mirrored = -a[(-np.arange(P)) % P]
    np.testing.assert_allclose(b, mirrored, atol=1e-12)


def test_trot_keyframes_need_trot():
    with pytest.raises(ParamOutOfRange):
        keyframes_trot(GaitParams("pronk"))


# -- splines ---------------------------------------------------------------

def test_constant_schedule():
    kf = Keyframes(((0.0, 0.03), (1.0, 0.03)), ((0.0, -0.01), (1.0, -0.01)))
    ref = spline_reference(kf, 0.1, DT)
    np.testing.assert_allclose(ref.samples[:, [0, 2]], [[0.03, -0.01]] * 250, atol=1e-15)
    np.testing.assert_allclose(ref.samples[:, [1, 3]], 0.0, atol=1e-12)


def test_samples_per_period():
    ref = gait_reference(GaitParams("trot", T=0.1), DT)
    assert ref.period == 250


def test_non_periodic_keyframes():
    with pytest.raises(NonPeriodicKeyframes):
        spline_reference(Keyframes(((0.0, 0.0), (1.0, 1.0)), ((0.0, 0.0), (1.0, 0.0))), 0.1, DT)
    with pytest.raises(NonPeriodicKeyframes):
        spline_reference(keyframes_trot(GaitParams()), 0.1003, 0.0004 * 1.01)


def test_spline_reproduces_sampled_sine():
    phases = np.linspace(0.0, 1.0, 21)
    sine = tuple((p, 0.1 * np.sin(2 * np.pi * p)) for p in phases)
    sine = sine[:-1] + ((1.0, sine[0][1]),)
    cosine = tuple((p, 0.1 * np.cos(2 * np.pi * p)) for p in phases)
    ref = spline_reference(Keyframes(sine, cosine), 0.1, DT)
    t = np.arange(ref.period) / ref.period
    err = ref.samples[:, 0] - 0.1 * np.sin(2 * np.pi * t)
    assert np.sqrt(np.mean(err**2)) < 0.01 * np.sqrt(np.mean((0.1 * np.sin(2 * np.pi * t)) ** 2))


def test_velocity_is_spline_derivative():
    ref = gait_reference(GaitParams("trot", T=0.05, S1=60.0), DT)
    t = np.arange(ref.period) * ref.dt
    np.testing.assert_array_equal(ref.samples[:, 1], ref.spline(t, 1)[:, 0])
    np.testing.assert_allclose(ref.evaluate(t), ref.samples, atol=1e-15)


def test_reference_is_periodic():
    ref = gait_reference(GaitParams("trot", T=0.05, S1=80.0, S2=-25.0), DT)
    T = ref.period * ref.dt
    np.testing.assert_allclose(ref.evaluate(T), ref.evaluate(0.0), atol=1e-9)


@pytest.mark.parametrize("f", FREQ_GRID)
@pytest.mark.parametrize("s1", S1_GRID)
def test_retraction_fraction(f, s1):
    ref = gait_reference(GaitParams("trot", T=1.0 / f, S1=s1), DT)
    assert abs(100.0 * retraction_fraction(ref) - s1) <= 2.0
    # sampled at the control rate the fraction is quantized to whole ticks
    sampled = 100.0 * np.mean(ref.samples[:, 1] < 0.0)
    assert abs(sampled - s1) <= 2.0 + 100.0 / ref.period


@settings(max_examples=60, deadline=None)
@given(f=st.sampled_from(FREQ_GRID), s1=st.sampled_from(S1_GRID), s2=st.sampled_from(S2_GRID),
       s3=st.sampled_from(S3_GRID), pronk=st.booleans())
def test_reference_stays_near_bounds(f, s1, s2, s3, pronk):
    p = GaitParams("pronk" if pronk else "trot", T=1.0 / f, S1=s1, S2=s2, S3=s3)
    ref = gait_reference(p, DT)
    a_s = p.A_S * 1e-3
    a_l = p.A_L * 1e-3
    assert np.abs(ref.samples[:, 0]).max() <= 0.5 * a_s * 1.05
    lift_bound = a_l * max(abs(p.S2) / 100.0, 0.5) if not pronk else 0.5 * a_l
    assert np.abs(ref.samples[:, 2]).max() <= lift_bound * 1.05


@settings(max_examples=30, deadline=None)
@given(s2a=st.sampled_from(S2_GRID), s2b=st.sampled_from(S2_GRID), s1=st.sampled_from(S1_GRID))
def test_stance_shape_only_moves_lift(s2a, s2b, s1):
    a = gait_reference(GaitParams("trot", T=0.04, S1=s1, S2=s2a), DT).samples
    b = gait_reference(GaitParams("trot", T=0.04, S1=s1, S2=s2b), DT).samples
    np.testing.assert_array_equal(a[:, :2], b[:, :2])


# -- phasing and baselines -------------------------------------------------

def test_leg_phases():
    assert assign_leg_phases("pronk") == (0.0, 0.0, 0.0, 0.0)
    fl, fr, rl, rr = assign_leg_phases("trot")
    assert fl == rr and fr == rl and abs(fl - fr) == 0.5


def test_leg_index():
    ref = gait_reference(GaitParams("trot", T=0.1), DT)
    assert ref.leg_index(10, 0) == 10
    assert ref.leg_index(10, 1) == (10 + 125) % 250
    np.testing.assert_array_equal(ref.for_leg(1)[10], ref.samples[135])


def test_equal_rms_gives_identical_baselines():
    rms = np.full((4, 2), 40.0)
    a = sinusoid_reference(0.05, DT, "coupled", rms)
    b = sinusoid_reference(0.05, DT, "decoupled", rms)
    np.testing.assert_array_equal(a.voltages, b.voltages)


def test_decoupled_keeps_ratio():
    rms = np.tile([20.0, 40.0], (4, 1))
    d = sinusoid_reference(0.05, DT, "decoupled", rms)
    assert d.rms == (20.0, 40.0)
    rms_out = np.sqrt(np.mean(d.voltages**2, axis=0))
    assert rms_out[1] == pytest.approx(2.0 * rms_out[0], rel=1e-12)
    c = sinusoid_reference(0.05, DT, "coupled", rms)
    assert c.rms == (30.0, 30.0)
    v = c.voltages
    assert np.sqrt(np.mean(v**2, axis=0)) == pytest.approx([30.0, 30.0], rel=1e-12)


def test_pronk_legs_are_synchronous():
    d = sinusoid_reference(0.05, DT, "coupled", [[30.0, 30.0]], gait="pronk")
    for leg in range(1, 4):
        np.testing.assert_array_equal(d.for_leg(leg), d.for_leg(0))


def test_baseline_needs_rms():
    with pytest.raises(MissingBaselineData):
        sinusoid_reference(0.05, DT, "coupled", None)
    with pytest.raises(MissingBaselineData):
        sinusoid_reference(0.05, DT, "coupled", [[np.nan, 1.0]])
