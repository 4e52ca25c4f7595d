import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afcmem.constants import GROUND_SPLITTING_HZ
from afcmem.pulses import (
    Direction,
    InstantPulse,
    PulseEnvelope,
    PulseError,
    Transition,
    gaussian_pulse,
    gaussian_spectral_fwhm,
    ideal_pulse,
    instantaneous_frequency,
    pulse_area,
    sech_pulse,
    sech_tau,
    square_pulse,
)


def _fwhm(x, y):
    above = np.flatnonzero(y >= 0.5 * y.max())
    lo, hi = above[0], above[-1]
    left = np.interp(0.5 * y.max(), [y[lo - 1], y[lo]], [x[lo - 1], x[lo]])
    right = np.interp(0.5 * y.max(), [y[hi + 1], y[hi]], [x[hi + 1], x[hi]])
    return right - left


def test_input_spectral_width_fits_inside_comb():
    assert gaussian_spectral_fwhm(450e-9) == pytest.approx(0.98e6, rel=5e-3)
    p = gaussian_pulse(450e-9, 1.0, dt=5e-9)
    n = 1 << 16
    spec = np.abs(np.fft.fftshift(np.fft.fft(p.samples, n))) ** 2
    nu = np.fft.fftshift(np.fft.fftfreq(n, p.dt))
    assert _fwhm(nu, spec) == pytest.approx(gaussian_spectral_fwhm(450e-9), rel=1e-3)
    assert _fwhm(nu, spec) < 2e6


@pytest.mark.parametrize("dt", [1e-9, 5e-9, 10e-9])
def test_numeric_fwhm_within_dt(dt):
    p = gaussian_pulse(450e-9, 2.0, t_center=1e-6, dt=dt)
    assert abs(_fwhm(p.times, np.abs(p.samples) ** 2) - 450e-9) <= dt


def test_zero_amplitude_gives_zero_envelope():
    p = gaussian_pulse(450e-9, 0.0)
    assert not np.any(p.samples)
    assert pulse_area(p) == 0.0


def test_gaussian_is_unchirped():
    p = gaussian_pulse(450e-9, 1.0)
    np.testing.assert_allclose(instantaneous_frequency(p, p.times), 0.0, atol=1e-9)


def test_reference_control_pulse_parameters():
    p = sech_pulse(600e-9, 1.2e6, 2e6, dt=1e-9)
    assert np.abs(p.samples).max() == pytest.approx(1.2e6, rel=1e-4)
    amp = np.abs(p.samples)
    assert _fwhm(p.times, amp) == pytest.approx(600e-9, abs=2e-9)
    assert p.transition is Transition.SE
    assert p.carrier_detuning == -GROUND_SPLITTING_HZ


def test_sech_sweep_at_three_tau():
    tau = sech_tau(600e-9)
    p = sech_pulse(600e-9, 1.2e6, 2e6, t_center=0.0, dt=1e-9)
    f = instantaneous_frequency(p, np.array([-3 * tau, 0.0, 3 * tau]))
    np.testing.assert_allclose(f, [-1e6 * math.tanh(3), 0.0, 1e6 * math.tanh(3)], rtol=1e-4, atol=50)
    assert f[2] == pytest.approx(0.995 * 1e6, rel=1e-3)


def test_sech_sweep_matches_tanh():
    tau = sech_tau(600e-9)
    p = sech_pulse(600e-9, 1.2e6, 2e6, dt=1e-9)
    t = np.linspace(-2 * tau, 2 * tau, 201)
    expected = 1e6 * np.tanh(t / tau)
    err = np.abs(instantaneous_frequency(p, t) - expected)
    assert np.all(err <= 0.01 * 1e6)


def test_unchirped_sech_is_real():
    p = sech_pulse(600e-9, 1.2e6, 0.0)
    np.testing.assert_allclose(p.samples.imag, 0.0, atol=1e-9)


def test_square_pi_pulse_area():
    p = square_pulse(500e-9, 1e6, dt=1e-9)
    assert pulse_area(p) == pytest.approx(math.pi, rel=1e-9)


@pytest.mark.parametrize("convention", ["fwhm", "tau", "intensity_1pct"])
def test_sech_area_matches_analytic_integral(convention):
    tau = sech_tau(600e-9, convention)
    p = sech_pulse(600e-9, 1.2e6, 2e6, dt=1e-9, convention=convention)
    assert pulse_area(p) == pytest.approx(2 * math.pi * 1.2e6 * math.pi * tau, rel=1e-3)


def test_area_grid_refinement():
    a = pulse_area(sech_pulse(600e-9, 1.2e6, 2e6, dt=10e-9))
    b = pulse_area(sech_pulse(600e-9, 1.2e6, 2e6, dt=5e-9))
    assert abs(a - b) / b < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.floats(200e-9, 2e-6), st.floats(0.1e6, 3e6), st.floats(0.0, 6e6))
def test_sech_time_reversal(duration, rabi, chirp):
    p = sech_pulse(duration, rabi, chirp, t_center=0.0, dt=duration / 200)
    k = np.argmax(np.abs(p.samples))
    m = min(k, p.samples.size - 1 - k)
    left, right = p.samples[k - m : k][::-1], p.samples[k + 1 : k + 1 + m]
    np.testing.assert_allclose(np.abs(left), np.abs(right), rtol=1e-9, atol=1e-12 * rabi)
    np.testing.assert_allclose(np.angle(left * np.conj(right)), 0.0, atol=1e-7)


def test_tags_preserved_by_scaling():
    p = sech_pulse(600e-9, 1e6, 2e6, direction=Direction.FORWARD)
    q = p.scaled(0.5j)
    assert q.direction is Direction.FORWARD and q.transition is Transition.SE
    assert q.carrier_detuning == p.carrier_detuning


def test_chirp_outside_window_rejected():
    with pytest.raises(PulseError):
        sech_pulse(600e-9, 1e6, 20e6)


def test_nonpositive_parameters_rejected():
    with pytest.raises(PulseError):
        gaussian_pulse(0.0, 1.0)
    with pytest.raises(PulseError):
        sech_pulse(0.0, 1e6, 1e6)
    with pytest.raises(PulseError):
        square_pulse(1e-10, 1e6, dt=1e-9)


def test_truncated_envelope_rejected():
    with pytest.raises(PulseError):
        PulseEnvelope(np.ones(10), 0.0, 1e-9)


def test_se_pulse_needs_ground_splitting():
    with pytest.raises(PulseError):
        PulseEnvelope(np.array([0, 1, 0]), 0.0, 1e-9, carrier_detuning=0.0, transition="s_e")


def test_instantaneous_frequency_outside_grid():
    p = gaussian_pulse(450e-9, 1.0)
    with pytest.raises(PulseError):
        instantaneous_frequency(p, p.t_end + 1e-6)


def test_ideal_pulse_transfer():
    assert ideal_pulse(1e-6).transfer == pytest.approx(1.0)
    assert InstantPulse(0.0, area=math.pi / 2).transfer == pytest.approx(0.5)


def test_pulse_csv(tmp_path):
    p = gaussian_pulse(450e-9, 1.0, dt=10e-9)
    data = np.loadtxt(p.to_csv(tmp_path / "p.csv"), delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 0], p.times)
    np.testing.assert_array_equal(data[:, 1], p.samples.real)
