import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kreslingcap.errors import CountOverflowError, ParameterError
from kreslingcap.signal import (Calibrator, CalibratorState, TankConfig, calibrate_update, capacitance_from_counts,
                                counts_from_frequency, derivative, frequency_from_counts, lsb_capacitance,
                                read_timeline, resonant_frequency, synthesize_acquisition)

QUIET = TankConfig(noise_sigma=0.0)


def triangle_timeline(cycles=10, points=13, c0=0.1, c1=0.3, dt=0.1):
    """Twist 0 -> 30 -> 0 deg per cycle mapped linearly onto capacitance."""
    up = np.linspace(0.0, 30.0, points)
    cyc = np.concatenate([up, up[-2::-1]])[:-1]
    theta = np.concatenate([np.tile(cyc, cycles), [0.0]])
    c = c0 + (c1 - c0) * theta / 30.0
    return np.arange(len(theta)) * dt, theta, c


def test_resonance_oracle():
    # 30-digit reference for 18 uH with 33.1 pF total
    assert resonant_frequency(0.1, QUIET) == pytest.approx(6520334.59213002, rel=1e-12)
    assert resonant_frequency(0.0, QUIET) == pytest.approx(6530206.41397075, rel=1e-12)


def test_quadrupled_capacitance_halves_frequency():
    cfg = TankConfig(c_fixed=10.0)
    assert resonant_frequency(30.0, cfg) == pytest.approx(0.5 * resonant_frequency(0.0, cfg), rel=1e-12)


def test_small_step_shift():
    f0 = resonant_frequency(0.1, QUIET)
    f1 = resonant_frequency(0.3, QUIET)
    assert (f1 - f0) / f0 == pytest.approx(-0.003, abs=2e-5)


def test_count_oracles():
    assert counts_from_frequency(20e6, QUIET) == 2**27
    assert counts_from_frequency(resonant_frequency(0.1, QUIET), QUIET) == 43757225
    with pytest.raises(CountOverflowError):
        counts_from_frequency(40e6, QUIET)
    with pytest.raises(ParameterError):
        resonant_frequency(-0.1, QUIET)


def test_tank_validation():
    with pytest.raises(ParameterError):
        TankConfig(f_ref=10e6).validate()
    with pytest.raises(ParameterError):
        TankConfig(bits=40).validate()
    with pytest.raises(ParameterError):
        TankConfig(inductance=0.0).validate()
    assert TankConfig().validate() is not None


@settings(max_examples=200)
@given(st.floats(0.0, 50.0))
def test_round_trip_within_one_lsb(c):
    counts = counts_from_frequency(resonant_frequency(c, QUIET), QUIET)
    assert abs(capacitance_from_counts(counts, QUIET) - c) <= lsb_capacitance(c, QUIET)


@settings(max_examples=100)
@given(st.floats(0.0, 50.0), st.floats(0.01, 10.0))
def test_counts_decrease_with_capacitance(c, dc):
    f = resonant_frequency(np.array([c, c + dc]), QUIET)
    k = counts_from_frequency(f, QUIET)
    assert k[1] <= k[0]
    assert np.allclose(frequency_from_counts(k, QUIET), f, rtol=1e-6)


def test_calibrator_stream_oracle():
    cal = Calibrator()
    assert cal.run([10, 20, 30]).tolist() == [0.0, 100.0, 100.0]
    assert cal.update(10) == 0.0
    assert cal.state == CalibratorState(10, 30, True)


def test_constant_stream_is_zero():
    assert np.all(Calibrator().run([5.0] * 20) == 0.0)
    assert np.all(Calibrator(window=4).run([5.0] * 20) == 0.0)


def test_functional_update_matches_class():
    xs = np.random.default_rng(2).normal(size=200)
    state, out = CalibratorState(), []
    for x in xs:
        state, n = calibrate_update(state, x)
        out.append(n)
    assert np.array_equal(out, Calibrator().run(xs))


def test_window_validation():
    with pytest.raises(ParameterError):
        Calibrator(window=0)


def test_sliding_window_matches_brute_force():
    xs = np.random.default_rng(5).integers(0, 50, 400).astype(float)
    w = 17
    got = Calibrator(window=w).run(xs)
    for i, x in enumerate(xs):
        seg = xs[max(0, i - w + 1): i + 1]
        span = seg.max() - seg.min()
        assert got[i] == pytest.approx(0.0 if span == 0 else 100 * (x - seg.min()) / span)


@pytest.mark.parametrize("window", [None, 64])
def test_fuzzed_output_bounded(window):
    rng = np.random.default_rng(7)
    xs = np.concatenate([rng.normal(0, 1e6, 500_000), rng.integers(-2**31, 2**31, 500_000).astype(float)])
    rng.shuffle(xs)
    out = Calibrator(window).run(xs)
    assert len(out) == 1_000_000
    assert out.min() >= 0.0 and out.max() <= 100.0


@settings(max_examples=100)
@given(st.lists(st.floats(-1e12, 1e12), min_size=1, max_size=200), st.one_of(st.none(), st.integers(1, 50)))
def test_normalized_bounded_property(xs, window):
    out = Calibrator(window).run(xs)
    assert np.all((out >= 0.0) & (out <= 100.0))


def test_derivative_oracles():
    assert np.allclose(derivative(np.full(10, 3.0), 0.1), 0.0)
    t = np.arange(10) * 0.5
    assert np.allclose(derivative(2.0 * t + 1.0, 0.5), 2.0)
    with pytest.raises(ParameterError):
        derivative([1.0, 2.0], 0.1)
    with pytest.raises(ParameterError):
        derivative([1.0, 2.0, 3.0], 0.0)


def test_derivative_of_sine():
    dt = 1.0 / 100
    t = np.arange(300) * dt
    d = derivative(np.sin(2 * np.pi * t), dt)
    exact = 2 * np.pi * np.cos(2 * np.pi * t)
    assert np.abs(d[1:-1] - exact[1:-1]).max() <= 0.01 * 2 * np.pi


def test_acquisition_is_deterministic():
    t, _, c = triangle_timeline(cycles=2)
    a = synthesize_acquisition(t, c, TankConfig(), seed=3)
    b = synthesize_acquisition(t, c, TankConfig(), seed=3)
    other = synthesize_acquisition(t, c, TankConfig(), seed=4)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != other.to_csv()
    assert a.to_csv().startswith("t_s,counts,normalized,derivative\n")
    assert len(list(a.samples())) == len(t)


def test_zero_noise_counts_are_ideal():
    t, _, c = triangle_timeline(cycles=1)
    a = synthesize_acquisition(t, c, QUIET, seed=1)
    assert np.array_equal(a.counts, counts_from_frequency(resonant_frequency(c, QUIET), QUIET))


def test_peaks_align_with_maximum_twist():
    t, theta, c = triangle_timeline()
    acq = synthesize_acquisition(t, c, TankConfig(), seed=0)
    twist_peaks = np.flatnonzero(theta == 30.0)
    per = 24
    for k, p in enumerate(twist_peaks):
        seg = acq.normalized[k * per: (k + 1) * per + 1]
        # a saturated plateau peaks where it ends
        top = np.flatnonzero(seg == seg.max())[-1]
        assert abs(k * per + int(top) - p) <= 1


def test_monotone_sections_stay_monotone():
    t, theta, c = triangle_timeline(cycles=3)
    acq = synthesize_acquisition(t, c, QUIET)
    up = slice(24, 37)
    assert np.all(np.diff(acq.normalized[up]) >= 0)
    assert np.all(acq.derivative[25:36] >= 0)


def _drift_span():
    return counts_from_frequency(resonant_frequency(0.1, QUIET), QUIET) - \
        counts_from_frequency(resonant_frequency(0.3, QUIET), QUIET)


@pytest.mark.parametrize("drift", [dict(drift_amplitude=0.5, drift_period=60.0), dict(drift_slope=0.3 / 2.4)])
def test_sliding_window_removes_slow_drift(drift):
    t, theta, c = triangle_timeline()
    peaks = np.flatnonzero(theta == 30.0)
    span = _drift_span()
    # drift expressed in signal spans; a cycle is 24 samples, the window 20
    cfg = TankConfig(**{k: (v * span if k != "drift_period" else v) for k, v in drift.items()})
    windowed = synthesize_acquisition(t, c, cfg, seed=0, window=20).normalized[peaks]
    unbounded = synthesize_acquisition(t, c, cfg, seed=0).normalized[peaks]
    assert (windowed.max() - windowed.min()) / windowed.max() < 0.05
    assert (unbounded.max() - unbounded.min()) / unbounded.max() > 0.05


def test_read_timeline():
    t, c = read_timeline("t_s,C_pF\n0,0.1\n0.1,0.2\n")
    assert t.tolist() == [0.0, 0.1] and c.tolist() == [0.1, 0.2]
    with pytest.raises(ParameterError):
        read_timeline("time,C\n0,1\n")
    with pytest.raises(ParameterError):
        read_timeline("t_s,C_pF\n0,abc\n")


def test_acquisition_rejects_bad_timelines():
    with pytest.raises(ParameterError):
        synthesize_acquisition([0.0, 0.1, 0.3], [0.1, 0.1, 0.1], QUIET)
    with pytest.raises(ParameterError):
        synthesize_acquisition([0.0, 0.1], [0.1], QUIET)
