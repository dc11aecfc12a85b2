"""Closed-form upper bounds on the zero-forcing rate gap per feedback scheme.

Each bound dominates the Monte Carlo gap (1/N) sum_n log(1 + E|I_k[n]|^2)
of its scheme, so R_csit - bound is an achievable per-user rate and
K max(0, R_csit - bound) an achievable sum rate.  All rates are in nats;
bit budgets are in bits.

Budget accounting: a feedback load of alpha_fb downlink symbols per channel
coefficient buys alpha_fb * M channel uses per user per frame, worth
alpha_fb*(M-1)*log2(1+snr) codebook bits for direction-only (RVQ) feedback
or alpha_fb*M*log2(1+snr) bits for coefficient (digital) feedback; analog
feedback spends the uses directly and has no bit equivalent.
"""

from __future__ import annotations

import math

import numpy as np

from .channel_model import ChannelStats, dft_submatrix, freq_correlation
from .quantizers import KL_RANK_RTOL, BitAllocation
from .zfbf_rates import perfect_csit_rate

__all__ = [
    "budget_to_bits",
    "bound_analog",
    "bound_analog_highsnr",
    "bound_rvq",
    "bound_rvq_budget",
    "bound_tdq_limit",
    "bound_tdq_highsnr",
    "bound_suq",
    "sum_rate_lower",
    "cluster_offsets",
    "divisors",
]


def budget_to_bits(kind: str, alpha_fb: float, snr: float, m_antennas: int) -> float:
    """Total feedback bits bought by alpha_fb for a digital scheme."""
    if alpha_fb < 0 or snr <= 0 or m_antennas < 1:
        raise ValueError("need alpha_fb >= 0, snr > 0, and a positive antenna count")
    uses = alpha_fb * m_antennas
    if kind == "rvq":
        # one coefficient per antenna is direction-irrelevant
        return uses * (1.0 - 1.0 / m_antennas) * math.log2(1.0 + snr)
    if kind == "digital":
        return uses * math.log2(1.0 + snr)
    if kind == "analog":
        raise ValueError("analog feedback spends channel uses, not bits")
    raise ValueError(f"unknown budget kind {kind!r}")


def divisors(n: int) -> list[int]:
    return [j for j in range(1, n + 1) if n % j == 0]


def cluster_offsets(n_subcarriers: int, j_clusters: int):
    """Subcarrier offsets (-a..b) covered by one feedback cluster."""
    if n_subcarriers % j_clusters:
        raise ValueError("cluster count must divide the subcarrier count")
    size = n_subcarriers // j_clusters
    if size % 2 == 0:
        a, b = size // 2 - 1, size // 2
    else:
        a = b = size // 2
    return np.arange(-a, b + 1)


def _spread_eigenvalues(stats: ChannelStats) -> np.ndarray:
    """Positive eigenvalues of the tap covariance, descending.

    For a diagonal profile these are the tap variances; for a physical
    model, the per-path spread powers (at most P of them).  They also equal
    the K-L variances divided by N.
    """
    w = np.linalg.eigvalsh(stats.tap_cov).real
    w = w[w > KL_RANK_RTOL * float(np.max(w))]
    return np.sort(w)[::-1]


# ---------------------------------------------------------------------------
# analog feedback


def bound_analog(
    stats: ChannelStats,
    j_clusters: int,
    beta: float,
    snr: float,
    m_antennas: int,
    snr_fb: float | None = None,
) -> float:
    """Rate-gap upper bound for analog feedback with MMSE interpolation.

    Majorizes the exact interpolation error by pairing the spread
    eigenvalues (descending) against the eigenvalues of the sampled-DFT
    Gram matrix (ascending): with z = min(J, #eigenvalues), the largest
    #eig - z variances survive undamped and the rest are damped by
    1/(1 + N rho lambda).  The feedback link uses the downlink SNR unless
    snr_fb overrides it.
    """
    if snr <= 0 or beta <= 0 or m_antennas < 1:
        raise ValueError("snr, beta, and antenna count must be positive")
    n = stats.n_subcarriers
    if n % j_clusters:
        raise ValueError("cluster count must divide the subcarrier count")
    rho = beta * (snr if snr_fb is None else snr_fb)
    var = _spread_eigenvalues(stats)
    p_eff = var.size
    z = min(j_clusters, p_eff)

    idx = np.arange(j_clusters) * (n // j_clusters)
    alpha = dft_submatrix(n, stats.n_taps)[idx, :]
    gram = alpha @ stats.tap_cov @ alpha.conj().T
    lam = np.linalg.eigvalsh(gram).real
    lam = lam[lam > KL_RANK_RTOL * max(float(np.max(lam)), 1e-300)]
    lam = np.sort(lam)
    if lam.size < z:  # rank-deficient sampling: missing modes get no damping
        lam = np.concatenate([np.zeros(z - lam.size), lam])
    lam = lam[:z]

    residual = float(np.sum(var[: p_eff - z]))
    residual += float(np.sum(var[p_eff - z :] / (1.0 + n * rho * lam)))
    frac = (m_antennas - 1) / m_antennas
    return math.log1p(frac * snr * residual)


def bound_analog_highsnr(
    stats: ChannelStats, j_clusters: int, beta: float, m_antennas: int
) -> float:
    """High-SNR limit of the analog bound (finite only when J covers the spread)."""
    n = stats.n_subcarriers
    var = _spread_eigenvalues(stats)
    if j_clusters < var.size:
        return math.inf
    idx = np.arange(j_clusters) * (n // j_clusters)
    alpha = dft_submatrix(n, stats.n_taps)[idx, :]
    gram = alpha @ stats.tap_cov @ alpha.conj().T
    lam = np.sort(np.linalg.eigvalsh(gram).real)
    lam = lam[lam > KL_RANK_RTOL * float(np.max(lam))][: var.size]
    if lam.size < var.size:
        return math.inf
    frac = (m_antennas - 1) / m_antennas
    return math.log1p(frac / n * float(np.sum(var / (beta * lam))))


# ---------------------------------------------------------------------------
# random vector quantization


def bound_rvq(
    stats: ChannelStats,
    j_clusters: int,
    bits_per_cluster: float,
    snr: float,
    m_antennas: int,
) -> float:
    """Rate-gap upper bound for per-cluster RVQ direction feedback.

    Averages, over the offsets delta of one cluster, the loss from quantizing
    the cluster head (isotropic 2^-B/(M-1) direction error) plus the decay of
    the frequency correlation c(delta) across the cluster.
    """
    if bits_per_cluster < 0:
        raise ValueError("bits per cluster must be nonnegative")
    if snr <= 0 or m_antennas < 2:
        raise ValueError("snr must be positive and M >= 2 for direction feedback")
    offs = cluster_offsets(stats.n_subcarriers, j_clusters)
    c2 = np.array([abs(freq_correlation(stats, int(d))) ** 2 for d in offs])
    sin2 = 2.0 ** (-bits_per_cluster / (m_antennas - 1))
    frac = (m_antennas - 1) / m_antennas
    terms = stats.sigma_h2 * snr * (c2 * sin2 + frac * (1.0 - c2))
    return float(np.mean(np.log1p(terms)))


def bound_rvq_budget(
    stats: ChannelStats,
    alpha_fb: float,
    snr: float,
    m_antennas: int,
    j_grid=None,
):
    """Best RVQ cluster count for a budget: (gap, J, total bits).

    Splits alpha_fb*(M-1)*log2(1+snr) bits evenly over J cluster codebooks
    and minimizes the bound over the divisor grid; ties go to the smaller J.
    """
    b_tot = budget_to_bits("rvq", alpha_fb, snr, m_antennas)
    grid = divisors(stats.n_subcarriers) if j_grid is None else sorted(j_grid)
    best = None
    for j in grid:
        gap = bound_rvq(stats, j, b_tot / j, snr, m_antennas)
        if best is None or gap < best[0] - 1e-15:
            best = (gap, j)
    return best[0], best[1], b_tot


# ---------------------------------------------------------------------------
# time-domain / K-L quantization


def bound_tdq_limit(
    stats: ChannelStats,
    distortion: float,
    snr: float,
    m_antennas: int,
    domain: str = "taps",
) -> float:
    """Rate-gap upper bound at total coefficient distortion D.

    domain "taps"/"paths": D is time-domain, per-subcarrier error is D
    itself.  domain "kl": D is the K-L total, per-subcarrier error D/N.
    """
    if distortion < 0:
        raise ValueError("distortion must be nonnegative")
    frac = (m_antennas - 1) / m_antennas
    if domain in ("taps", "paths"):
        return math.log1p(frac * snr * distortion)
    if domain == "kl":
        return math.log1p(frac * snr * distortion / stats.n_subcarriers)
    raise ValueError(f"unknown domain {domain!r}")


def bound_tdq_highsnr(
    stats: ChannelStats,
    snr: float,
    m_antennas: int,
    rate: float | None = None,
    alpha_fb: float | None = None,
    coeff_count: int | None = None,
    exact: bool = False,
) -> float:
    """High-rate rate-gap bound from a per-antenna bit budget.

    With n spread coefficients and R bits per antenna, reverse waterfilling
    puts every coefficient above water, so D = n (prod v)^(1/n) 2^(-R/n)
    (exact=True), relaxed by AM-GM to sigma_H^2 2^(-R/n).  Passing alpha_fb
    instead evaluates the budget form sigma_H^2 snr^(1 - alpha_fb/n), which
    fixes R = alpha_fb log2(1+snr) and drops the +1 inside the SNR power.
    """
    if (rate is None) == (alpha_fb is None):
        raise ValueError("pass exactly one of rate or alpha_fb")
    var = _spread_eigenvalues(stats)
    n_c = var.size if coeff_count is None else int(coeff_count)
    if not 1 <= n_c <= var.size:
        raise ValueError(f"coefficient count must lie in [1, {var.size}]")
    var = var[:n_c]
    frac = (m_antennas - 1) / m_antennas
    if alpha_fb is not None:
        if exact:
            raise ValueError("the budget form is already a relaxation; use rate=")
        return math.log1p(stats.sigma_h2 * frac * snr ** (1.0 - alpha_fb / n_c))
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if exact:
        gmean = float(np.exp(np.mean(np.log(var))))
        dist = n_c * gmean * 2.0 ** (-rate / n_c)
        return math.log1p(frac * snr * dist)
    return math.log1p(stats.sigma_h2 * frac * snr * 2.0 ** (-rate / n_c))


def bound_suq(
    alloc: BitAllocation,
    snr: float,
    m_antennas: int,
    domain: str = "taps",
    n_subcarriers: int | None = None,
) -> float:
    """Rate-gap upper bound for an operational SUQ allocation.

    Plugs the allocation's realized weighted distortion into
    log(1 + ((M-1)/M) snr D); K-L allocations carry the extra 1/N.
    """
    if snr <= 0 or m_antennas < 1:
        raise ValueError("snr and antenna count must be positive")
    d = alloc.total_distortion
    if domain == "kl":
        if n_subcarriers is None:
            raise ValueError("K-L domain needs n_subcarriers to scale the distortion")
        d = d / n_subcarriers
    elif domain not in ("taps", "paths"):
        raise ValueError(f"unknown domain {domain!r}")
    frac = (m_antennas - 1) / m_antennas
    return math.log1p(frac * snr * d)


def sum_rate_lower(
    stats: ChannelStats, snr: float, m_antennas: int, k_users: int, gap: float
) -> float:
    """Achievable sum rate K max(0, R_csit - gap), nats per channel use."""
    if k_users < 1:
        raise ValueError("user count must be positive")
    per_user = perfect_csit_rate(snr, m_antennas, stats.sigma_h2) - gap
    return k_users * max(0.0, per_user)
