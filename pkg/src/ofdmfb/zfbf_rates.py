"""Zero-forcing beamforming and Monte Carlo achievable-rate estimation.

The base station serves K = M single-antenna users with per-subcarrier
zero-forcing beamforming computed from whatever CSIT a feedback scheme
delivers, splitting power evenly (P/M per user, noise normalized to 1).
For each scheme the estimator returns:

* the Monte Carlo rate gap (1/N) sum_n log(1 + E|I_k[n]|^2), giving the
  achievable lower bound R_csit - gap;
* the genie-aided upper bound E[(1/N) sum_n log(1 + SINR_k[n])] in which
  the receiver knows the instantaneous interference power.

A scheme is a callable (realization, rng) -> (K, M, N) CSIT array; the rng
is the trial's substream, already advanced past the channel draw, so
feedback noise and codebooks are reproducible regardless of scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import exp1

from .channel_model import ChannelRealization, ChannelStats, sample_channel
from .rng import substream

__all__ = [
    "BeamformerSet",
    "RateEstimate",
    "zf_beamformer",
    "perfect_csit_rate",
    "mc_rates",
    "CONDITION_CAP",
]

#: Condition-number threshold beyond which a subcarrier's CSIT matrix is
#: treated as degenerate (no reliable zero-forcing directions).
CONDITION_CAP = 1e12

Scheme = Callable[[ChannelRealization, np.random.Generator], np.ndarray]


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """Unit-norm ZF directions per subcarrier.

    vectors: (N, M, K), column j is user j's beam on that subcarrier;
    degenerate: (N,) flags where the CSIT matrix failed the condition cap
    (those columns are zeroed and the subcarrier carries no rate).
    """

    vectors: np.ndarray
    degenerate: np.ndarray


def zf_beamformer(csit: np.ndarray, cond_cap: float = CONDITION_CAP) -> BeamformerSet:
    """Per-subcarrier zero-forcing directions from (K, M, N) CSIT.

    Column j of the pseudoinverse of the stacked conjugate CSIT satisfies
    hhat_k^H w_j = delta_kj; normalizing gives the ZF directions.  The
    pseudoinverse is SVD-based and a subcarrier is flagged degenerate when
    its smallest singular value is zero or the condition number exceeds
    cond_cap.
    """
    k_users, m_antennas, _ = csit.shape
    if k_users > m_antennas:
        raise ValueError("zero forcing needs at least as many antennas as users")
    g = np.conj(np.transpose(csit, (2, 0, 1)))  # (N, K, M), rows hhat_k^H
    u, s, vh = np.linalg.svd(g, full_matrices=False)
    smin = s[:, -1]
    degenerate = (smin <= 0.0) | (s[:, 0] > cond_cap * np.where(smin > 0, smin, np.inf))
    with np.errstate(divide="ignore"):
        s_inv = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    w = np.einsum("nkm,nk,njk->nmj", vh.conj(), s_inv, u.conj())
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    vectors = np.where(norms > 0, w / np.where(norms > 0, norms, 1.0), 0.0)
    vectors[degenerate] = 0.0
    return BeamformerSet(vectors=vectors, degenerate=degenerate)


def perfect_csit_rate(snr: float, m_antennas: int, sigma_h2: float) -> float:
    """Per-user ergodic ZF rate with perfect CSIT, in nats.

    E[log(1 + |h|^2 snr / M)] for an exponential |h|^2 of mean sigma_H^2
    equals exp(x) E1(x) with x = M / (snr sigma_H^2).
    """
    if snr <= 0 or m_antennas < 1 or sigma_h2 <= 0:
        raise ValueError("snr, antenna count, and channel power must be positive")
    x = m_antennas / (snr * sigma_h2)
    if x < 600.0:
        return float(math.exp(x) * exp1(x))
    # asymptotic expansion, avoids exp overflow; relative error < 1e-11 here
    inv = 1.0 / x
    return float(inv * (1.0 - inv * (1.0 - 2.0 * inv * (1.0 - 3.0 * inv * (1.0 - 4.0 * inv)))))


@dataclass(frozen=True, eq=False)
class RateEstimate:
    """Monte Carlo rate summary for one scheme and operating point (nats).

    csit_rate is the analytic perfect-CSIT per-user rate; gap the MC
    estimate of (1/N) sum_n log(1 + mean interference); lower their
    difference; genie_upper the instantaneous-SINR upper bound.  Per-user
    arrays keep the K estimates; scalars average them.  stderr_genie and
    stderr_gap are one-sigma Monte Carlo errors of the scalar estimates.
    """

    csit_rate: float
    gap: float
    lower: float
    genie_upper: float
    per_user_gap: np.ndarray
    per_user_genie: np.ndarray
    interference: np.ndarray
    stderr_genie: float
    stderr_gap: float
    n_trials: int
    degenerate_cells: int


def _trial_block(
    trials,
    stats: ChannelStats,
    scheme: Scheme,
    snr: float,
    m_antennas: int,
    k_users: int,
    master_seed: int,
    stream: int,
    intf_out: np.ndarray,
    genie_out: np.ndarray,
) -> None:
    p_user = snr / m_antennas
    for t in trials:
        rng = substream(master_seed, stream, t)
        real = sample_channel(stats, m_antennas, k_users, rng)
        csit = scheme(real, rng)
        bf = zf_beamformer(csit)
        # a[n, k, j] = H_k[n]^H v_j[n]
        a = np.einsum("kmn,nmj->nkj", real.freq.conj(), bf.vectors)
        pow_a = np.abs(a) ** 2 * p_user
        sig = np.einsum("nkk->nk", pow_a)
        intf = np.sum(pow_a, axis=2) - sig
        genie = np.log1p(sig / (1.0 + intf))
        if bf.degenerate.any():
            # no beams there: zero rate in the genie, no interference sample
            genie[bf.degenerate] = 0.0
            intf[bf.degenerate] = np.nan
        intf_out[t] = intf.T
        genie_out[t] = np.mean(genie, axis=0)


def mc_rates(
    stats: ChannelStats,
    scheme: Scheme,
    snr: float,
    m_antennas: int,
    k_users: int,
    n_trials: int,
    master_seed: int,
    jobs: int = 1,
    stream: int = 0,
) -> RateEstimate:
    """Monte Carlo lower/upper rate estimates for one feedback scheme.

    Every trial draws from its own counter-based substream keyed by
    (master_seed, stream, trial), and reductions run in trial order, so the
    result is bit-identical for any job count.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    if jobs < 1:
        raise ValueError("job count must be positive")
    n = stats.n_subcarriers
    intf = np.empty((n_trials, k_users, n))
    genie = np.empty((n_trials, k_users))

    if jobs == 1:
        _trial_block(
            range(n_trials), stats, scheme, snr, m_antennas, k_users,
            master_seed, stream, intf, genie,
        )
    else:
        chunks = np.array_split(np.arange(n_trials), min(jobs * 4, n_trials))
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(
                    _trial_block, chunk, stats, scheme, snr, m_antennas,
                    k_users, master_seed, stream, intf, genie,
                )
                for chunk in chunks if chunk.size
            ]
            for fut in futures:
                fut.result()

    nan_mask = np.isnan(intf)
    degenerate = int(nan_mask[:, 0, :].sum())
    valid = (~nan_mask).sum(axis=0)  # (K, N)
    # a slot degenerate in every trial has no interference estimate at all
    mean_intf = np.where(valid > 0, np.nansum(intf, axis=0) / np.maximum(valid, 1), np.nan)
    per_user_gap = np.mean(np.log1p(mean_intf), axis=1)
    gap = float(np.mean(per_user_gap))

    per_user_genie = np.mean(genie, axis=0)
    genie_scalar = float(np.mean(per_user_genie))
    trial_genie = np.mean(genie, axis=1)
    stderr_genie = float(np.std(trial_genie, ddof=1) / math.sqrt(n_trials)) if n_trials > 1 else float("inf")

    # delta method for the gap: d gap / d mean_intf[n] = 1/(N (1+mean))
    ratio = np.where(nan_mask, 0.0, np.nan_to_num(intf) / (1.0 + mean_intf))
    y_scalar = np.mean(np.mean(ratio, axis=2), axis=1)
    stderr_gap = float(np.std(y_scalar, ddof=1) / math.sqrt(n_trials)) if n_trials > 1 else float("inf")

    csit = perfect_csit_rate(snr, m_antennas, stats.sigma_h2)
    return RateEstimate(
        csit_rate=csit,
        gap=gap,
        lower=csit - gap,
        genie_upper=genie_scalar,
        per_user_gap=per_user_gap,
        per_user_genie=per_user_genie,
        interference=mean_intf,
        stderr_genie=stderr_genie,
        stderr_gap=stderr_gap,
        n_trials=int(n_trials),
        degenerate_cells=degenerate,
    )
