import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from helpers import corr, interior, random_smooth_signal
from sttf.emd import (EmdConfig, InsufficientExtremaError, count_zero_crossings, decompose,
                      envelopes, find_extrema, is_imf, mean_envelope, natural_cubic_spline,
                      sift_once, spline_envelope)
from sttf.synthetic import tones

K1000 = np.arange(1000, dtype=float)


# -- extrema ----------------------------------------------------------------

def test_extrema_single_oscillation():
    ext = find_extrema([0, 1, 0, -1, 0])
    assert ext.maxima == [(1, 1.0)]
    assert ext.minima == [(3, -1.0)]


def test_extrema_monotonic():
    assert find_extrema([1, 2, 3, 4]).count == 0


def test_extrema_plateau_midpoint():
    ext = find_extrema([0, 2, 2, 2, 0, -1, 0])
    assert ext.max_idx.tolist() == [2]
    assert ext.min_idx.tolist() == [5]


def test_extrema_of_sine_match_analytic_peaks():
    x = np.sin(2 * np.pi * K1000 / 50)
    ext = find_extrema(x)
    assert ext.max_idx.size == 20 and ext.min_idx.size == 20
    # analytic peaks at 12.5 + 50 j and troughs at 37.5 + 50 j
    assert np.all(np.abs(ext.max_idx - (12.5 + 50 * np.arange(20))) <= 1)
    assert np.all(np.abs(ext.min_idx - (37.5 + 50 * np.arange(20))) <= 1)
    merged = np.sort(np.r_[ext.max_idx, ext.min_idx])
    kinds = np.isin(merged, ext.max_idx)
    assert np.all(kinds[1:] != kinds[:-1])


def test_zero_crossings():
    assert count_zero_crossings([1, -1, 1, -1]) == 3
    assert count_zero_crossings([1, 0, 0, -1]) == 1
    assert count_zero_crossings([1, 2, 3]) == 0


# -- splines and envelopes ---------------------------------------------------

def test_natural_spline_matches_scipy():
    rng = np.random.default_rng(0)
    x = np.sort(rng.choice(200, size=25, replace=False)).astype(float)
    y = rng.standard_normal(25)
    q = np.linspace(x[0], x[-1], 500)
    ref = CubicSpline(x, y, bc_type="natural")(q)
    np.testing.assert_allclose(natural_cubic_spline(x, y, q), ref, atol=1e-10)


def test_natural_spline_three_knots_by_hand():
    # symmetric system: M0 = M2 = 0, 20 M1 = 6 * (-2/5)  ->  S(x) = -0.004 x^3 + 0.3 x on [0, 5]
    q = np.arange(6.0)
    got = natural_cubic_spline([0, 5, 10], [0, 1, 0], q)
    np.testing.assert_allclose(got, -0.004 * q**3 + 0.3 * q, atol=1e-12)


def test_envelope_two_equal_knots_is_constant():
    np.testing.assert_allclose(spline_envelope([(0, 2.0), (9, 2.0)], 10), np.full(10, 2.0), atol=1e-12)


@pytest.mark.parametrize("boundary", ["mirror", "clamped"])
def test_envelope_three_knots_symmetric(boundary):
    env = spline_envelope([(0, 0.0), (5, 1.0), (10, 0.0)], 11, boundary)
    assert abs(env[5] - 1.0) < 1e-9
    assert abs(env[0]) < 1e-9 and abs(env[10]) < 1e-9
    np.testing.assert_allclose(env, env[::-1], atol=1e-9)


def test_sine_envelope_is_flat():
    x = np.sin(2 * np.pi * K1000 / 40)
    pair = envelopes(x)
    mid = slice(333, 667)
    assert np.max(np.abs(pair.upper[mid] - 1.0)) < 0.02
    assert np.max(np.abs(pair.lower[mid] + 1.0)) < 0.02


def test_envelope_errors():
    with pytest.raises(InsufficientExtremaError):
        spline_envelope([], 10)
    with pytest.raises(ValueError):
        spline_envelope([(3, 1.0), (1, 1.0)], 10)
    with pytest.raises(ValueError):
        spline_envelope([(1, 1.0), (3, 1.0)], 10, boundary="periodic")


def test_mean_envelope_cases():
    assert np.all(mean_envelope(np.full(5, 2.0), np.full(5, -2.0)) == 0.0)
    s = np.array([1.0, -3.0, 2.5])
    assert np.array_equal(mean_envelope(s, s), s)
    rng = np.random.default_rng(7)
    u, lo = rng.standard_normal(100), rng.standard_normal(100)
    np.testing.assert_array_equal(mean_envelope(u, lo), np.array([(a + b) / 2 for a, b in zip(u, lo)]))
    with pytest.raises(ValueError):
        mean_envelope(np.zeros(3), np.zeros(4))


# -- sifting -----------------------------------------------------------------

def test_sift_sine_is_nearly_unchanged():
    x = np.sin(2 * np.pi * K1000 / 40)
    d = sift_once(x).d
    mid = interior(1000)
    assert np.sqrt(np.mean((d[mid] - x[mid]) ** 2)) < 0.02


def test_sift_removes_offset():
    c = 0.7
    x = np.sin(2 * np.pi * K1000 / 40) + c
    d = sift_once(x).d
    assert abs(np.mean(d[interior(1000)])) < c


def test_sift_ramp_fails():
    with pytest.raises(InsufficientExtremaError):
        sift_once(np.arange(20.0))


def test_is_imf_cases():
    x = np.sin(2 * np.pi * K1000 / 40)
    assert is_imf(x).ok
    assert not is_imf(np.arange(10.0)).ok
    shifted = is_imf(x + 0.5)
    assert not shifted.ok
    assert shifted.max_mean_deviation > shifted.tolerance


# -- decomposition -------------------------------------------------------------

def test_ramp_gives_no_imfs():
    x = np.linspace(-3, 8, 300)
    res = decompose(x)
    assert res.n_imfs == 0
    assert np.array_equal(res.residual, x)


def test_single_tone_is_one_imf():
    x = np.sin(2 * np.pi * K1000 / 20)
    res = decompose(x)
    energy = np.sum(res.imfs**2, axis=1)
    assert np.argmax(energy) == 0
    assert energy[0] > 0.99 * energy.sum()
    mid = interior(1000)
    assert corr(res.imfs[0][mid], x[mid]) > 0.99


def test_two_tones_separate():
    n = 2000
    fast, slow = tones(n, [10]), tones(n, [100])
    res = decompose(fast + slow)
    mid = interior(n)
    assert corr(res.imfs[0][mid], fast[mid]) > 0.95
    assert corr(res.imfs[1][mid], slow[mid]) > 0.95


@pytest.mark.parametrize("boundary", ["mirror", "clamped"])
def test_imfs_satisfy_admission(boundary):
    x = random_smooth_signal(3)
    res = decompose(x, boundary=boundary)
    assert res.n_imfs >= 2
    for imf in res.imfs:
        assert is_imf(imf, boundary=boundary).ok
    np.testing.assert_allclose(res.reconstruct(), x, atol=1e-8 * np.max(np.abs(x)))


def test_max_imfs_caps_output():
    x = random_smooth_signal(5)
    res = decompose(x, max_imfs=1)
    assert res.n_imfs == 1
    np.testing.assert_allclose(res.reconstruct(), x, atol=1e-10)


def test_constant_and_short_inputs():
    res = decompose(np.full(50, 3.0))
    assert res.n_imfs == 0 and np.all(res.residual == 3.0)
    with pytest.raises(ValueError):
        decompose([1.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        decompose([1.0, np.nan, 2.0, 1.0])


def test_channels_put_residual_last():
    res = decompose(tones(600, [12, 90]))
    ch = res.as_channels()
    assert ch.shape == (600, res.n_imfs + 1)
    assert np.array_equal(ch[:, -1], res.residual)


def test_config_validation():
    with pytest.raises(ValueError):
        EmdConfig(boundary="wrap")
    with pytest.raises(ValueError):
        EmdConfig(zero_mean_tol=0)
    assert EmdConfig(**EmdConfig().to_dict()) == EmdConfig()


@settings(max_examples=25, deadline=None)
@given(n=st.integers(8, 400), seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e4))
def test_reconstruction_property(n, seed, scale):
    x = scale * np.random.default_rng(seed).standard_normal(n).cumsum()
    res = decompose(x)
    assert np.max(np.abs(res.reconstruct() - x)) <= 1e-8 * np.max(np.abs(x))
    assert len(res.sift_counts) == res.n_imfs == len(res.converged)
