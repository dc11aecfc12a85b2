"""Analog feedback link and MMSE interpolation."""

import numpy as np
import pytest

from ofdmfb import (
    AnalogFeedbackConfig,
    build_dip_stats,
    build_interpolator,
    estimate,
    freq_covariance,
    mmse_error_trace_reduced,
    preset_stats,
    sample_channel,
    simulate_feedback,
    substream,
)

DIP5 = (0.5, 0.24, 0.17, 0.06, 0.03)


def test_config_validation():
    cfg = AnalogFeedbackConfig(j_clusters=8, beta=2.0, snr_fb=10.0)
    assert cfg.rho == 20.0
    with pytest.raises(ValueError):
        AnalogFeedbackConfig(j_clusters=0)
    with pytest.raises(ValueError):
        AnalogFeedbackConfig(j_clusters=8, beta=-1.0)
    with pytest.raises(ValueError):
        AnalogFeedbackConfig(j_clusters=8, snr_fb=0.0)


def test_cluster_count_must_divide():
    stats = build_dip_stats(DIP5, 64)
    with pytest.raises(ValueError):
        build_interpolator(stats, AnalogFeedbackConfig(j_clusters=3))


def test_feedback_observation_model():
    stats = build_dip_stats(DIP5, 64)
    cfg = AnalogFeedbackConfig(j_clusters=8, beta=1.0, snr_fb=10.0)
    rng = substream(3, 0)
    real = sample_channel(stats, 4, 4, rng)
    g = simulate_feedback(real, cfg, rng)
    assert g.shape == (4, 4, 8)
    idx = np.arange(8) * 8
    resid = g - np.sqrt(cfg.rho) * real.freq[:, :, idx]
    # residual is the unit-variance feedback noise
    assert abs(np.mean(np.abs(resid) ** 2) - 1.0) < 0.3


def test_feedback_observation_variance():
    # per-entry variance rho sigma_H^2 + 1 = 11 in normalized units
    stats = build_dip_stats(DIP5, 64)
    cfg = AnalogFeedbackConfig(j_clusters=8, beta=1.0, snr_fb=10.0)
    rng = substream(11, 0)
    acc = 0.0
    count = 0
    for _ in range(300):
        real = sample_channel(stats, 2, 2, rng)
        g = simulate_feedback(real, cfg, rng)
        acc += float(np.sum(np.abs(g) ** 2))
        count += g.size
    var = acc / count
    se = 11.0 / np.sqrt(count)  # |g|^2 has std close to its mean here
    assert abs(var - 11.0) < 4 * se


def test_noiseless_limit_recovers_samples():
    stats = build_dip_stats(DIP5, 64)
    cfg = AnalogFeedbackConfig(j_clusters=8, beta=1.0, snr_fb=1e12)
    rng = substream(21, 0)
    real = sample_channel(stats, 1, 1, rng)
    g = simulate_feedback(real, cfg, rng)
    idx = np.arange(8) * 8
    assert np.max(np.abs(g / np.sqrt(cfg.rho) - real.freq[:, :, idx])) < 1e-4


def test_interpolator_no_information_limit():
    stats = build_dip_stats(DIP5, 64)
    interp = build_interpolator(stats, AnalogFeedbackConfig(j_clusters=8, snr_fb=1e-14))
    assert np.max(np.abs(interp.gain)) < 1e-6
    assert np.allclose(interp.err_cov, freq_covariance(stats), atol=1e-10)
    assert abs(interp.err_var - stats.sigma_h2) < 1e-10


def test_interpolator_perfect_recovery_when_sampled_enough():
    stats = build_dip_stats(DIP5, 64)
    for j in (8, 16, 64):
        interp = build_interpolator(stats, AnalogFeedbackConfig(j_clusters=j, snr_fb=1e12))
        assert interp.err_var < 1e-9 * stats.sigma_h2


def test_interpolator_undersampled_floor():
    # J = 4 < L = 5: one tap dimension stays invisible at any feedback SNR
    stats = build_dip_stats(DIP5, 64)
    interp = build_interpolator(stats, AnalogFeedbackConfig(j_clusters=4, snr_fb=1e12))
    assert interp.err_var > 1e-4
    # the majorized residual with z = 4 keeps one undamped variance and
    # can only overestimate the true floor
    assert interp.err_var <= max(DIP5) + 1e-9


def test_error_variance_monotone_in_rho():
    stats = build_dip_stats(DIP5, 64)
    last = np.inf
    for snr_fb in (0.1, 1.0, 10.0, 100.0, 1e4):
        err = build_interpolator(stats, AnalogFeedbackConfig(8, 1.0, snr_fb)).err_var
        assert err < last
        last = err
    assert 0.0 <= err <= stats.sigma_h2


def test_error_covariance_psd_hermitian():
    stats = build_dip_stats(DIP5, 64)
    interp = build_interpolator(stats, AnalogFeedbackConfig(8, 1.0, 10.0))
    assert np.max(np.abs(interp.err_cov - interp.err_cov.conj().T)) < 1e-12
    w = np.linalg.eigvalsh(interp.err_cov)
    assert np.min(w) > -1e-10 * stats.sigma_h2


def test_reduced_trace_matches_full():
    for stats in (build_dip_stats(DIP5, 64), preset_stats("sui4-omni")):
        for j in (4, 8, 16):
            for snr_fb in (0.5, 10.0, 300.0):
                interp = build_interpolator(stats, AnalogFeedbackConfig(j, 1.0, snr_fb))
                reduced = mmse_error_trace_reduced(stats, j, snr_fb)
                assert abs(interp.err_var - reduced) < 1e-9 * max(reduced, 1e-300)


def test_estimate_zero_observation():
    stats = build_dip_stats(DIP5, 64)
    interp = build_interpolator(stats, AnalogFeedbackConfig(8, 1.0, 10.0))
    out = estimate(interp, np.zeros((2, 3, 8), dtype=complex))
    assert out.shape == (2, 3, 64)
    assert np.all(out == 0)


def test_estimate_flat_channel_rank_one_prior():
    stats = build_dip_stats((1.0,), 64)
    cfg = AnalogFeedbackConfig(j_clusters=1, beta=1.0, snr_fb=1e10)
    interp = build_interpolator(stats, cfg)
    rng = substream(31, 0)
    real = sample_channel(stats, 1, 1, rng)
    g = simulate_feedback(real, cfg, rng)
    est = estimate(interp, g)
    assert np.max(np.abs(est - est[:, :, :1])) < 1e-12  # constant across carriers
    assert np.max(np.abs(est - real.freq)) < 1e-4


def test_estimation_error_statistics():
    # per-carrier MSE matches the analytic error covariance diagonal, and the
    # error is orthogonal to the observation (defining MMSE property)
    stats = build_dip_stats(DIP5, 64)
    cfg = AnalogFeedbackConfig(j_clusters=8, beta=2.0, snr_fb=10.0)
    interp = build_interpolator(stats, cfg)
    rng = substream(41, 0)
    trials = 600
    err_acc = np.zeros(64)
    cross_acc = np.zeros((64, 8), dtype=complex)
    samples = 0
    for _ in range(trials):
        real = sample_channel(stats, 2, 2, rng)
        g = simulate_feedback(real, cfg, rng)
        err = real.freq - estimate(interp, g)
        err_acc += np.sum(np.abs(err) ** 2, axis=(0, 1))
        cross_acc += np.einsum("kmn,kmj->nj", err, g.conj())
        samples += 4
    mse = err_acc / samples
    se = interp.err_var_per_carrier / np.sqrt(samples)
    assert np.all(np.abs(mse - interp.err_var_per_carrier) < 4 * se)
    cross = np.abs(cross_acc) / samples
    # E[err g^H] entries are means of products with O(1) variance
    assert np.max(cross) < 4 * np.sqrt(cfg.rho) / np.sqrt(samples)


def test_estimate_dimension_mismatch():
    stats = build_dip_stats(DIP5, 64)
    interp = build_interpolator(stats, AnalogFeedbackConfig(8, 1.0, 10.0))
    with pytest.raises(ValueError):
        estimate(interp, np.zeros((2, 2, 7), dtype=complex))
