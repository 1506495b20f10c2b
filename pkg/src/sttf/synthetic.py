"""Seeded synthetic traffic-like series for tests, demos and acceptance runs."""

from __future__ import annotations

import numpy as np

from .timeseries import TimeSeries

SAMPLES_PER_DAY = 48  # 30-minute intervals


def traffic_like_series(n: int = 3840, seed: int = 0, mean: float = 431.0,
                        daily_amplitude: float = 300.0, weekly_depth: float = 0.2,
                        phase_drift: float = 0.6, noise_sigma: float = 20.0,
                        interval_minutes: int = 30) -> TimeSeries:
    """Daily cycle with weekly amplitude modulation, a slowly drifting peak
    phase and Gaussian noise, clipped at zero like a count series.

    The drift completes one swing every 17 days so peak times wander
    slowly from day to day.
    """
    rng = np.random.default_rng(seed)
    k = np.arange(n, dtype=np.float64)
    per_day = SAMPLES_PER_DAY * 30 / interval_minutes
    weekly = 1.0 + weekly_depth * np.sin(2 * np.pi * k / (7 * per_day) + rng.uniform(0, 2 * np.pi))
    drift = phase_drift * np.sin(2 * np.pi * k / (17 * per_day) + rng.uniform(0, 2 * np.pi))
    daily = daily_amplitude * weekly * np.sin(2 * np.pi * k / per_day + drift)
    values = mean + daily + noise_sigma * rng.standard_normal(n)
    return TimeSeries(np.clip(values, 0.0, None), interval_minutes=interval_minutes)


def tones(n: int, periods, amplitudes=None, noise_sigma: float = 0.0, seed: int = 0) -> np.ndarray:
    """Sum of sinusoids ``sum a_j sin(2 pi k / P_j)`` plus optional noise."""
    k = np.arange(n, dtype=np.float64)
    amplitudes = np.ones(len(periods)) if amplitudes is None else amplitudes
    x = sum(a * np.sin(2 * np.pi * k / p) for a, p in zip(amplitudes, periods))
    if noise_sigma:
        x = x + noise_sigma * np.random.default_rng(seed).standard_normal(n)
    return np.asarray(x, dtype=np.float64)
