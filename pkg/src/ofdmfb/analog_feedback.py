"""Analog CSI feedback with MMSE interpolation at the base station.

Each user sends the unquantized frequency response of every antenna on J
equally spaced pilot subcarriers (one cluster head per N/J carriers), scaled
by sqrt(beta * P) over an AWGN feedback link, spending beta uplink symbols
per coefficient.  The base station linearly interpolates the full response
from the J noisy samples with the MMSE filter built from the channel's
frequency covariance.

All feedback-link quantities are noise normalized (N0 = 1): the observation
is g = sqrt(rho) * H_s + w with rho = beta * snr_fb and w ~ CN(0, I).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel_model import ChannelRealization, ChannelStats, dft_submatrix, freq_covariance

__all__ = [
    "AnalogFeedbackConfig",
    "MmseInterpolator",
    "build_interpolator",
    "simulate_feedback",
    "estimate",
    "mmse_error_trace_reduced",
]

_TRACE_AGREEMENT_RTOL = 1e-9


@dataclass(frozen=True)
class AnalogFeedbackConfig:
    """Pilot layout and link budget of the analog feedback channel."""

    j_clusters: int
    beta: float = 1.0
    snr_fb: float = 1.0

    def __post_init__(self):
        if self.j_clusters < 1:
            raise ValueError("need at least one feedback cluster")
        if self.beta <= 0:
            raise ValueError("beta (uplink symbols per coefficient) must be positive")
        if self.snr_fb <= 0:
            raise ValueError("feedback-link SNR must be positive")

    @property
    def rho(self) -> float:
        """Effective per-sample feedback SNR beta * snr_fb."""
        return self.beta * self.snr_fb


@dataclass(frozen=True, eq=False)
class MmseInterpolator:
    """MMSE reconstruction of the N-carrier response from J pilot samples.

    gain:    (N, J) filter applied to the noisy observation
    err_cov: (N, N) error covariance Sigma_e
    err_var_per_carrier: real diagonal of Sigma_e
    err_var: average estimation error sigma_e^2 = trace(Sigma_e) / N
    """

    sample_idx: np.ndarray
    gain: np.ndarray
    err_cov: np.ndarray
    err_var_per_carrier: np.ndarray
    err_var: float


def _sample_indices(stats: ChannelStats, j_clusters: int) -> np.ndarray:
    n = stats.n_subcarriers
    if n % j_clusters != 0:
        raise ValueError(
            f"cluster count must divide the subcarrier count, got J={j_clusters}, N={n}"
        )
    return np.arange(j_clusters) * (n // j_clusters)


def build_interpolator(stats: ChannelStats, cfg: AnalogFeedbackConfig) -> MmseInterpolator:
    """MMSE interpolator and its error covariance for the given pilot grid."""
    idx = _sample_indices(stats, cfg.j_clusters)
    rho = cfg.rho
    sigma_hh = freq_covariance(stats)
    s_sig = sigma_hh[idx, :]  # S Sigma_H, (J, N)
    a = s_sig[:, idx]  # S Sigma_H S^H, (J, J)
    b = rho * a + np.eye(cfg.j_clusters)
    # Hermitian positive definite: factor once, reuse for gain and covariance
    cho = scipy.linalg.cho_factor(b, lower=True)
    x = scipy.linalg.cho_solve(cho, s_sig)  # B^{-1} S Sigma_H, (J, N)
    gain = np.sqrt(rho) * x.conj().T
    err_cov = sigma_hh - rho * (s_sig.conj().T @ x)
    err_per = np.maximum(np.real(np.diag(err_cov)), 0.0)
    full_trace = float(np.mean(err_per))

    # the reduced form is free of the subtraction above, so it keeps full
    # precision even when the error is many orders below sigma_H^2; the full
    # form only has to agree up to that cancellation
    reduced = mmse_error_trace_reduced(stats, cfg.j_clusters, rho)
    tol = _TRACE_AGREEMENT_RTOL * (stats.sigma_h2 + abs(reduced))
    if abs(full_trace - reduced) > tol:
        raise AssertionError(
            "MMSE error trace mismatch between full and reduced forms: "
            f"{full_trace!r} vs {reduced!r}"
        )
    return MmseInterpolator(
        sample_idx=idx,
        gain=gain,
        err_cov=err_cov,
        err_var_per_carrier=err_per,
        err_var=reduced,
    )


def mmse_error_trace_reduced(stats: ChannelStats, j_clusters: int, rho: float) -> float:
    """sigma_e^2 via the reduced Gram form, without the N x N covariance.

    With alpha the J x L block of the sampled DFT rows and G a square root
    of the tap covariance (G = Psi diag(mu) for the physical model, so the
    system solved is P x P there, L x L otherwise):

        sigma_e^2 = trace[(I + rho N G^H alpha^H alpha G)^{-1} G^H G]
    """
    idx = _sample_indices(stats, j_clusters)
    n = stats.n_subcarriers
    alpha = dft_submatrix(n, stats.n_taps)[idx, :]
    if stats.kind == "physical":
        g = stats.path_map * np.sqrt(stats.path_vars)
    else:
        w, v = np.linalg.eigh(stats.tap_cov)
        g = v * np.sqrt(np.clip(w, 0.0, None))
    ag = alpha @ g
    gram = g.conj().T @ g
    # evaluate in the eigenbasis of the sampled Gram matrix: each term only
    # divides by 1 + rho N w_i, so the trace stays accurate for any rho,
    # unlike a direct solve whose conditioning grows with rho
    w, u = np.linalg.eigh(ag.conj().T @ ag)
    w = np.clip(w, 0.0, None)
    diag = np.real(np.einsum("ji,jk,ki->i", u.conj(), gram, u))
    return float(np.sum(diag / (1.0 + rho * n * w)))


def simulate_feedback(
    real: ChannelRealization, cfg: AnalogFeedbackConfig, rng: np.random.Generator
) -> np.ndarray:
    """Noisy pilot observations g = sqrt(rho) H_s + w, shape (K, M, J)."""
    idx = _sample_indices(real.stats, cfg.j_clusters)
    samples = real.freq[:, :, idx]
    z = rng.standard_normal(samples.shape + (2,))
    noise = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
    return np.sqrt(cfg.rho) * samples + noise


def estimate(interp: MmseInterpolator, observations: np.ndarray) -> np.ndarray:
    """Apply the interpolator to (..., J) observations, giving (..., N) CSIT."""
    return np.einsum("nj,...j->...n", interp.gain, observations)
