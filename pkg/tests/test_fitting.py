import numpy as np
import pytest
from hypothesis import given, strategies as st

from qrefrig.fitting import FitError, cooling_model, fit_cooling, fit_damped_sinusoid


@given(st.floats(0.05, 0.5), st.floats(50.0, 5e4))
def test_cooling_fit_recovers_parameters(a, T):
    t = np.linspace(0, 6 * T, 400)
    fit = fit_cooling(t, cooling_model(t, a, T))
    assert fit.a == pytest.approx(a, rel=1e-6)
    assert fit.T_cool == pytest.approx(T, rel=1e-6)
    assert fit.rms_residual < 1e-9
    assert fit.asymptote == pytest.approx(0.5 - a, rel=1e-6, abs=1e-8)


def test_cooling_fit_with_noise(rng):
    t = np.linspace(0, 3e5, 2000)
    p = cooling_model(t, 0.42, 5e4) + 1e-3 * rng.standard_normal(t.size)
    fit = fit_cooling(t, np.clip(p, 0, 1))
    assert fit.T_cool == pytest.approx(5e4, rel=0.02)
    assert fit.a == pytest.approx(0.42, rel=0.01)


def test_constant_series_is_a_fit_error():
    with pytest.raises(FitError):
        fit_cooling(np.arange(20.0), np.full(20, 0.5))


def test_heating_series_is_rejected():
    t = np.linspace(0, 100, 50)
    with pytest.raises(FitError):
        fit_cooling(t, 0.5 + 0.3 * (1 - np.exp(-t / 20)))


def test_linear_drift_hits_grid_edge():
    t = np.linspace(0, 100, 50)
    with pytest.raises(FitError):
        fit_cooling(t, 0.5 - 1e-4 * t)


def test_input_validation():
    with pytest.raises(ValueError):
        fit_cooling(np.arange(5.0), np.full(5, 0.4))
    with pytest.raises(ValueError):
        fit_cooling(np.arange(20.0), np.full(20, 1.5))


@given(st.floats(1e-4, 1e-2), st.floats(0, 2 * np.pi))
def test_sinusoid_frequency(omega, phase):
    t = np.linspace(0, 4 * 2 * np.pi / omega, 300)
    y = 0.5 + 0.4 * np.cos(omega * t + phase)
    fit = fit_damped_sinusoid(t, y)
    assert fit.omega == pytest.approx(omega, rel=1e-6)
    assert fit.amplitude == pytest.approx(0.4, rel=1e-6)


def test_damped_sinusoid_short_record():
    # little more than one period: the FFT grid alone cannot resolve omega to 1 %
    t = np.linspace(0, 8.0, 80)
    y = 0.1 + np.exp(-0.05 * t) * np.cos(0.9 * t + 0.3)
    fit = fit_damped_sinusoid(t, y)
    assert fit.omega == pytest.approx(0.9, rel=1e-6)
    assert fit.decay == pytest.approx(0.05, rel=1e-5)


def test_flat_series_has_zero_frequency():
    fit = fit_damped_sinusoid(np.arange(20.0), np.full(20, 0.3))
    assert fit.omega == 0.0 and fit.amplitude == 0.0
