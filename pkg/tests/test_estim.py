import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal

from ptzloc.errors import InvalidCutoff
from ptzloc.estim import (Butterworth, ButterworthSpec, FilterParams, FilterState, RangeFilter,
                          SphericalCoord, butterworth, butterworth_coefficients,
                          cartesian_to_spherical, pf_init, pf_predict, pf_resample, pf_update,
                          sigma_rbf, spherical_to_cartesian, systematic_counts)

P = FilterParams()


def state(rho, weights=None, rho_dot=None):
    rho = np.asarray(rho, dtype=float)
    w = np.full(rho.size, 1.0 / rho.size) if weights is None else np.asarray(weights, dtype=float)
    rd = np.zeros(rho.size) if rho_dot is None else np.asarray(rho_dot, dtype=float)
    return FilterState(rho, rd, w)

# --- particle filter ---------------------------------------------------------------


def test_init_uniform_weights():
    s = pf_init(P, np.random.default_rng(0), init_mean=5.0)
    assert s.n == 2000
    assert np.all(s.weights == 5e-4)


def test_init_degenerate_spread():
    s = pf_init(FilterParams(init_std=0.0), np.random.default_rng(0), init_mean=5.0)
    assert np.all(s.rho == 5.0)


def test_init_reproducible():
    a = pf_init(P, np.random.default_rng(9), init_mean=5.0)
    b = pf_init(P, np.random.default_rng(9), init_mean=5.0)
    assert np.array_equal(a.rho, b.rho) and np.array_equal(a.rho_dot, b.rho_dot)


def test_predict_noiseless_constant_velocity():
    params = FilterParams(sigma_rho=1e-300, sigma_rho_dot=1e-300)
    s = pf_predict(state([1.0, 2.0], rho_dot=[1.0, 1.0]), 0.08, params, np.random.default_rng(0))
    assert s.rho == pytest.approx([1.08, 2.08], abs=1e-15)
    assert s.rho_dot == pytest.approx([1.0, 1.0])


def test_predict_process_noise_spread():
    s0 = state(np.zeros(2000))
    s1 = pf_predict(s0, 0.125, P, np.random.default_rng(1))
    assert np.std(s1.rho - s0.rho) == pytest.approx(0.3, abs=0.02)


def test_predict_rejects_zero_dt():
    with pytest.raises(ValueError):
        pf_predict(state([1.0]), 0.0, P, np.random.default_rng(0))


def test_sigma_rbf_examples():
    assert sigma_rbf(0.0, P) == 0.5
    assert sigma_rbf(0.1, P) == 1.5
    assert sigma_rbf(0.02, P) == 0.5


def test_update_single_particle():
    s, est = pf_update(state([4.2]), 4.2, 0.0, P)
    assert s.weights[0] == 1.0 and est == 4.2


def test_update_symmetric_pair():
    s, est = pf_update(state([4.0, 6.0]), 5.0, 0.0, P)
    assert s.weights[0] == pytest.approx(s.weights[1])
    assert est == pytest.approx(5.0)


def test_tilted_ellipse_pulls_estimate_less():
    s = pf_init(P, np.random.default_rng(2), init_mean=5.0)
    prior = s.mean()
    _, est0 = pf_update(s, 8.0, 0.0, P)
    _, est3 = pf_update(s, 8.0, 0.3, P)
    assert abs(est3 - prior) < abs(est0 - prior)


def test_update_far_observation_does_not_collapse():
    s, est = pf_update(state([1.0, 2.0]), 1e6, 0.0, P)
    assert np.isfinite(s.weights).all() and s.weights.sum() == pytest.approx(1.0)
    assert est == pytest.approx(2.0)


def test_fixed_width_ignores_phi():
    params = FilterParams(sigma_rbf_fixed=3.0)
    s = pf_init(params, np.random.default_rng(2), init_mean=5.0)
    _, a = pf_update(s, 8.0, 0.0, params)
    _, b = pf_update(s, 8.0, 0.5, params)
    assert a == b


@given(obs=st.floats(-50, 50), phi=st.floats(0, 1.5), seed=st.integers(0, 1000))
def test_update_normalises_weights(obs, phi, seed):
    s = pf_init(FilterParams(n_particles=200), np.random.default_rng(seed), init_mean=5.0)
    s2, est = pf_update(s, obs, phi, P)
    assert abs(s2.weights.sum() - 1.0) <= 1e-9
    assert np.all(s2.weights >= 0)
    assert s.rho.min() - 1e-9 <= est <= s.rho.max() + 1e-9


@pytest.mark.parametrize("offset", [0.0, 0.01, 0.5, 0.999])
def test_systematic_counts_examples(offset):
    assert systematic_counts([0.5, 0.3, 0.2], 10, offset).tolist() == [5, 3, 2]
    assert systematic_counts(np.full(7, 1 / 7), 7, offset).tolist() == [1] * 7
    assert systematic_counts([0.0, 1.0, 0.0], 10, offset).tolist() == [0, 10, 0]


@given(w=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=50), n=st.integers(1, 500),
       offset=st.floats(0.0, 0.999999))
def test_systematic_counts_within_one_of_expectation(w, n, offset):
    w = np.asarray(w)
    if w.sum() <= 1e-9:
        return
    w = w / w.sum()
    counts = systematic_counts(w, n, offset)
    assert counts.sum() == n
    assert np.all(np.abs(counts - n * w) < 1 + 1e-9)


def test_resample_resets_weights():
    s = state([1.0, 2.0, 3.0], weights=[0.0, 1.0, 0.0])
    r = pf_resample(s, np.random.default_rng(0))
    assert np.all(r.rho == 2.0)
    assert np.all(r.weights == pytest.approx(1 / 3))


def test_range_filter_tracks_constant_range():
    f = RangeFilter(P, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    est = [f.step(0.125 * k, 5.0 + 0.3 * rng.standard_normal(), 0.0) for k in range(400)]
    assert np.mean(est[100:]) == pytest.approx(5.0, abs=0.05)
    assert np.std(est[100:]) < 0.3

# --- Butterworth -----------------------------------------------------------------


def _amplitude_ratio(spec, freq_hz):
    bw = butterworth(spec)
    t = np.arange(0, 60, 1 / spec.f_sample_hz)
    bw.reset(0.0)
    y = bw.filter(np.sin(2 * np.pi * freq_hz * t))
    tail = y[len(y) // 2:]
    return (tail.max() - tail.min()) / 2


def test_dc_gain_is_one():
    for order in (1, 2, 3, 5):
        b, a = butterworth_coefficients(ButterworthSpec(order, 1.3, 8.0))
        assert abs(b.sum() / a.sum() - 1.0) <= 1e-9
    bw = Butterworth(ButterworthSpec(3, 0.6, 8.0))
    bw.reset(0.0)
    y = bw.filter(np.full(200, 2.5))
    assert y[-1] == pytest.approx(2.5, abs=1e-9)


def test_minus_three_db_at_cutoff():
    spec = ButterworthSpec(3, 1.0, 100.0)
    assert _amplitude_ratio(spec, 1.0) == pytest.approx(1 / math.sqrt(2), rel=0.02)


def test_third_order_rolloff():
    spec = ButterworthSpec(3, 1.0, 100.0)
    db = -20 * math.log10(_amplitude_ratio(spec, 4.0))
    assert db >= 34.0
    assert db == pytest.approx(36.0, abs=2.0)


@given(order=st.integers(1, 6), fc=st.floats(0.05, 3.9))
def test_coefficients_match_scipy(order, fc):
    b, a = butterworth_coefficients(ButterworthSpec(order, fc, 8.0))
    b_ref, a_ref = signal.butter(order, fc, fs=8.0)
    assert np.allclose(a, a_ref, rtol=1e-7, atol=1e-10)
    assert np.allclose(b, b_ref, rtol=1e-7, atol=1e-12)


def test_streaming_matches_lfilter():
    spec = ButterworthSpec(3, 0.6, 8.0)
    x = np.random.default_rng(0).standard_normal(300)
    bw = Butterworth(spec)
    bw.reset(0.0)
    b, a = butterworth_coefficients(spec)
    assert np.allclose(bw.filter(x), signal.lfilter(b, a, x), atol=1e-12)


def test_first_sample_initialises_steady_state():
    bw = Butterworth(ButterworthSpec(3, 0.6, 8.0))
    assert bw.filter_step(54.0) == pytest.approx(54.0)
    assert bw.filter_step(54.0) == pytest.approx(54.0)


@pytest.mark.parametrize("args", [(0, 1.0, 8.0), (3, 0.0, 8.0), (3, 4.0, 8.0)])
def test_invalid_cutoff(args):
    with pytest.raises(InvalidCutoff):
        ButterworthSpec(*args)

# --- coordinates --------------------------------------------------------------------


def test_spherical_examples():
    assert spherical_to_cartesian(SphericalCoord(3.0, 0.0, 0.0)).as_array() == pytest.approx([0, 0, 3])
    assert spherical_to_cartesian(SphericalCoord(2.0, 0.0, math.pi / 2)).as_array() == pytest.approx(
        [2, 0, 0], abs=1e-12)
    c = spherical_to_cartesian(SphericalCoord(5.047, math.radians(10), math.radians(5)))
    assert c.as_array() == pytest.approx([0.4399, 0.8730, 4.9514], abs=1e-4)


@given(r=st.floats(0.1, 100), p=st.floats(-3.0, 3.0), t=st.floats(-1.5, 1.5))
def test_spherical_round_trip(r, p, t):
    c = spherical_to_cartesian(SphericalCoord(r, p, t))
    assert np.linalg.norm(c.as_array()) == pytest.approx(r)
    back = cartesian_to_spherical(c.as_array())
    assert (back.rho_m, back.pan_total_rad, back.tilt_total_rad) == pytest.approx((r, p, t), abs=1e-9)

# --- statistical properties ----------------------------------------------------


@given(st.floats(0, 2), st.floats(0, 2))
def test_sigma_rbf_monotone(p, q):
    lo, hi = sorted((p, q))
    assert sigma_rbf(lo, P) <= sigma_rbf(hi, P)
    if hi <= P.sigma_rbf_min / P.lam:
        assert sigma_rbf(hi, P) == P.sigma_rbf_min


def _ramp_track(n=200, dt=0.125):
    t = np.arange(n) * dt
    # triangle wave between 5 m and 8 m at 0.5 m/s
    return t, 5.0 + 3.0 * np.abs((t / 6.0) % 2.0 - 1.0)


def _filtered(params, t, obs, phi, seed):
    f = RangeFilter(params, np.random.default_rng(seed))
    return np.array([f.step(tt, o, p) for tt, o, p in zip(t, obs, phi)])


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_filter_beats_raw_observations_under_gaussian_noise():
    t, rho = _ramp_track()
    wins = 0
    for trial in range(20):
        obs = rho + 0.5 * np.random.default_rng(trial).standard_normal(rho.size)
        est = _filtered(P, t, obs, np.zeros(rho.size), 1000 + trial)
        wins += _rms(est - rho) <= _rms(obs - rho)
    assert wins >= 18


def test_tilted_outliers_are_rejected():
    t, rho = _ramp_track()
    n = rho.size
    adaptive, fixed, raw = [], [], []
    for trial in range(20):
        rng = np.random.default_rng(trial)
        obs = rho + 0.1 * rng.standard_normal(n)
        phi = np.abs(0.005 * rng.standard_normal(n))
        spikes = rng.choice(np.arange(10, n), 10, replace=False)
        obs[spikes] += rng.choice([-1.0, 1.0], 10) * rng.uniform(2.0, 4.0, 10)
        phi[spikes] = rng.uniform(0.3, 0.6, 10)
        adaptive.append(_filtered(P, t, obs, phi, 1000 + trial) - rho)
        fixed.append(_filtered(FilterParams(sigma_rbf_fixed=0.5), t, obs, phi, 1000 + trial) - rho)
        raw.append(obs - rho)
    adaptive, fixed, raw = (np.abs(np.concatenate(x)) for x in (adaptive, fixed, raw))
    assert _rms(adaptive) < _rms(raw)
    assert _rms(adaptive) < _rms(fixed)
    assert np.median(adaptive) < 1.05 * np.median(raw)


def test_resampling_preserves_weighted_mean():
    rng = np.random.default_rng(3)
    rho = rng.uniform(0, 10, 50)
    w = rng.random(50) ** 3
    w /= w.sum()
    s = state(rho, w)
    target = s.mean()
    means = np.array([pf_resample(s, rng).mean() for _ in range(4000)])
    se = means.std(ddof=1) / math.sqrt(means.size)
    assert abs(means.mean() - target) < 3 * se
