"""Curve fits: the cooling-time model and a damped sinusoid for swap frequencies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar


class FitError(ValueError):
    """Fit could not produce a trustworthy estimate."""


@dataclass(frozen=True)
class CoolingFit:
    """``p(t) = a (exp(-t/T_cool) - 1) + 1/2``."""

    a: float
    T_cool: float
    rms_residual: float

    def __call__(self, t):
        return cooling_model(np.asarray(t, dtype=float), self.a, self.T_cool)

    @property
    def asymptote(self) -> float:
        return 0.5 - self.a


def cooling_model(t, a, T):
    return a * np.expm1(-t / T) + 0.5


def _best_a(y, f):
    den = float(f @ f)
    return float(y @ f) / den if den > 0 else 0.0


def _profile_cost(y, t, T):
    f = np.expm1(-t / T)
    a = _best_a(y, f)
    r = y - a * f
    return float(r @ r), a


def fit_cooling(times, populations, grid_points: int = 200) -> CoolingFit:
    """Least-squares fit of ``(a, T_cool)``.

    For a trial ``T_cool`` the optimal ``a`` is linear, so the cost is
    profiled over ``T_cool`` alone: a log-spaced scan locates the basin and a
    bounded Brent search on ``log T_cool`` between the neighbouring grid
    points polishes it.  Unlike plain Gauss-Newton this stays convergent when
    the series is not a clean exponential (large residual).
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(populations, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("times and populations must be 1-D arrays of equal length")
    if len(t) < 10:
        raise ValueError(f"need at least 10 samples, got {len(t)}")
    if not np.all(np.isfinite(p)) or p.min() < -1e-9 or p.max() > 1 + 1e-9:
        raise ValueError("populations must lie in [0, 1]")
    if np.ptp(p) < 1e-9:
        raise FitError("population series is constant; cooling time undefined")
    y = p - 0.5
    span = float(t.max() - t.min())
    positive = np.diff(np.unique(t))
    t_lo = float(positive.min()) if len(positive) else span
    grid = np.logspace(np.log10(t_lo / 10), np.log10(span * 100), grid_points)
    costs = [_profile_cost(y, t, T)[0] for T in grid]
    k = int(np.argmin(costs))
    if k in (0, len(grid) - 1):
        raise FitError(
            f"cooling-time scan hit the grid edge (T={grid[k]:.3g}, span {span:.3g}); "
            "series is not exponential on this horizon"
        )
    res = minimize_scalar(
        lambda u: _profile_cost(y, t, np.exp(u))[0],
        bounds=(np.log(grid[k - 1]), np.log(grid[k + 1])),
        method="bounded",
        options={"xatol": 1e-12},
    )
    T = float(np.exp(res.x))
    a = _profile_cost(y, t, T)[1]
    rms = float(np.sqrt(np.mean((p - cooling_model(t, a, T)) ** 2)))
    if not 0 <= a <= 0.5 + 1e-6:
        raise FitError(f"fitted amplitude a={a:.4g} outside [0, 0.5]; series does not describe cooling")
    return CoolingFit(float(a), T, rms)


@dataclass(frozen=True)
class SinusoidFit:
    """``y = offset + amplitude exp(-decay t) cos(omega t + phase)``."""

    offset: float
    amplitude: float
    decay: float
    omega: float
    phase: float
    rms_residual: float


def fit_damped_sinusoid(t, y) -> SinusoidFit:
    """Nonlinear least squares seeded by the zero-padded FFT peak."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 8:
        raise ValueError("need at least 8 samples")
    if np.ptp(y) < 1e-12:
        return SinusoidFit(float(y.mean()), 0.0, 0.0, 0.0, 0.0, 0.0)
    step = float(np.median(np.diff(t)))
    yc = y - y.mean()
    nfft = 8 * len(y)
    spec = np.abs(np.fft.rfft(yc, nfft))
    freqs = 2 * np.pi * np.fft.rfftfreq(nfft, step)
    k = int(np.argmax(spec[1:])) + 1
    w0 = freqs[k]
    amp0 = 0.5 * np.ptp(y)
    # phase from a linear fit at fixed frequency
    basis = np.column_stack([np.cos(w0 * t), -np.sin(w0 * t)])
    (c, s), *_ = np.linalg.lstsq(basis, yc, rcond=None)
    phi0 = float(np.arctan2(s, c))

    def resid(x):
        off, amp, dec, w, ph = x
        return off + amp * np.exp(-dec * t) * np.cos(w * t + ph) - y

    sol = least_squares(resid, [y.mean(), amp0, 0.0, w0, phi0], x_scale="jac", method="lm")
    off, amp, dec, w, ph = sol.x
    if amp < 0:
        amp, ph = -amp, ph + np.pi
    if w < 0:
        w, ph = -w, -ph
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return SinusoidFit(float(off), float(amp), float(dec), float(w), float(ph), rms)
