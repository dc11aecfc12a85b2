"""Quantized CSI feedback: vector codebooks, bit allocation, scalar quantizers.

Three digital feedback families are implemented:

* random vector quantization (RVQ) of the channel direction on each cluster
  head: 2^B isotropically drawn unit vectors, chosen by maximum inner
  product;
* rate-distortion-limit allocation over independent complex Gaussian
  coefficients via reverse waterfilling (RWF), in either direction
  (distortion -> rate or rate -> distortion), with optional per-coefficient
  weights;
* operational scalar uniform quantization (SUQ): each complex coefficient
  spends B_l bits, floor(B_l/2) per real dimension, on a symmetric uniform
  midpoint quantizer whose step is chosen by exact golden-section search on
  the closed-form Gaussian distortion (an asymptotic step rule is also
  available), plus greedy integer bit allocation in even steps.

Coefficients can live in three domains: the time-domain filter taps, the
Karhunen-Loeve coefficients of the frequency covariance, or the physical
path coefficients; quantize_channel_tdq maps a quantized coefficient vector
back to the frequency response the beamformer consumes.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .channel_model import ChannelRealization, ChannelStats, freq_covariance

__all__ = [
    "ResourceCapError",
    "RvqCodebook",
    "rvq_build",
    "rvq_quantize",
    "DEFAULT_RVQ_CAP",
    "BitAllocation",
    "rwf_by_distortion",
    "rwf_by_rate",
    "design_suq",
    "suq_step_asymptotic",
    "suq_distortion",
    "suq_quantize",
    "greedy_bit_alloc",
    "suq_alloc_from_rwf",
    "kl_transform",
    "KL_RANK_RTOL",
    "quantize_channel_tdq",
    "gaussian_test_channel",
    "TDQ_DOMAINS",
]

#: Largest supported RVQ codebook exponent (2^22 vectors ~ 0.5 GB at M = 8).
DEFAULT_RVQ_CAP = 22

#: Relative eigenvalue threshold deciding the K-L rank.
KL_RANK_RTOL = 1e-9

TDQ_DOMAINS = ("taps", "kl", "paths")


class ResourceCapError(RuntimeError):
    """A requested quantizer exceeds a configured resource cap."""


# ---------------------------------------------------------------------------
# random vector quantization


@dataclass(frozen=True, eq=False)
class RvqCodebook:
    """2^bits isotropic unit vectors in C^M, one row per codeword."""

    vectors: np.ndarray

    @property
    def bits(self) -> int:
        return int(self.vectors.shape[0]).bit_length() - 1

    @property
    def m_antennas(self) -> int:
        return int(self.vectors.shape[1])


def rvq_build(
    m_antennas: int, bits: int, rng: np.random.Generator, cap: int = DEFAULT_RVQ_CAP
) -> RvqCodebook:
    """Draw a random codebook of 2^bits unit vectors in C^M."""
    if m_antennas < 1:
        raise ValueError("codeword dimension must be positive")
    if bits < 0:
        raise ValueError("codebook exponent must be nonnegative")
    if bits > cap:
        raise ResourceCapError(
            f"RVQ codebook of 2^{bits} vectors exceeds the cap 2^{cap}"
        )
    z = rng.standard_normal((1 << bits, m_antennas, 2))
    vec = z[..., 0] + 1j * z[..., 1]
    vec /= np.linalg.norm(vec, axis=1, keepdims=True)
    return RvqCodebook(vectors=vec)


def rvq_quantize(h: np.ndarray, codebook: RvqCodebook):
    """Codeword maximizing |<h, c>|; ties resolve to the lowest index.

    h may be a single (M,) vector or a batch (..., M); returns (index,
    codeword) with matching leading shape.
    """
    h = np.asarray(h)
    if h.shape[-1] != codebook.m_antennas:
        raise ValueError("channel vector dimension does not match the codebook")
    ips = np.abs(h @ codebook.vectors.conj().T) ** 2
    idx = np.argmax(ips, axis=-1)
    return idx, codebook.vectors[idx]


# ---------------------------------------------------------------------------
# bit allocations


@dataclass(frozen=True, eq=False)
class BitAllocation:
    """Per-coefficient rate/distortion split for one antenna's coefficients.

    distortions are per complex coefficient in the coefficient's own domain;
    the weighted sum weights . distortions is what enters the rate-gap
    bounds.  steps/levels are populated only for operational SUQ
    allocations (levels counts quantizer points per real dimension; 0 where
    a coefficient gets no bits).
    """

    variances: np.ndarray
    weights: np.ndarray
    bits: np.ndarray
    distortions: np.ndarray
    water_level: float | None = None
    steps: np.ndarray | None = None
    levels: np.ndarray | None = None

    @property
    def n_coefficients(self) -> int:
        return self.variances.size

    @property
    def total_bits(self) -> float:
        return float(np.sum(self.bits))

    @property
    def total_distortion(self) -> float:
        """Weighted total distortion sum_l w_l D_l."""
        return float(np.sum(self.weights * self.distortions))

    @property
    def is_operational(self) -> bool:
        return self.steps is not None

    def describe(self) -> str:
        lines = ["coeff  variance      weight   bits     distortion  step"]
        for i in range(self.n_coefficients):
            step = "-" if self.steps is None or not self.bits[i] else f"{self.steps[i]:.4g}"
            lines.append(
                f"{i:>5}  {self.variances[i]:<12.6g}{self.weights[i]:<9.4g}"
                f"{self.bits[i]:<8.4g} {self.distortions[i]:<11.6g} {step}"
            )
        lines.append(
            f"total bits {self.total_bits:.6g}, weighted distortion "
            f"{self.total_distortion:.6g}"
        )
        return "\n".join(lines)


def _check_variances(variances, weights):
    v = np.asarray(variances, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("variances must be a nonempty 1-D sequence")
    if np.any(v < 0):
        raise ValueError("variances must be nonnegative")
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != v.shape:
            raise ValueError("weights must match variances in shape")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
    return v, w


def rwf_by_distortion(variances, target_distortion: float, weights=None) -> BitAllocation:
    """Reverse waterfilling: bits minimizing rate at the given distortion.

    Solves sum_l min(gamma, w_l sigma_l^2) = target (weighted) distortion
    for the water level gamma by bisection, then B_l = [log2(w_l sigma_l^2
    / gamma)]_+ and D_l = min(gamma, w_l sigma_l^2) / w_l.
    """
    v, w = _check_variances(variances, weights)
    eff = w * v
    total = float(np.sum(eff))
    d = float(target_distortion)
    if not 0.0 < d <= total:
        raise ValueError(
            f"target distortion must lie in (0, {total:.6g}], got {d:.6g}"
        )
    lo, hi = 0.0, float(np.max(eff))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum(np.minimum(mid, eff)) < d:
            lo = mid
        else:
            hi = mid
    gamma = 0.5 * (lo + hi)
    return _alloc_from_water_level(v, w, eff, gamma)


def rwf_by_rate(variances, target_rate: float, weights=None) -> BitAllocation:
    """Reverse waterfilling: distortion minimizing allocation of a bit budget."""
    v, w = _check_variances(variances, weights)
    if target_rate < 0:
        raise ValueError("bit budget must be nonnegative")
    eff = w * v
    top = float(np.max(eff))
    if top == 0.0 or target_rate == 0.0:
        return _alloc_from_water_level(v, w, eff, top if top > 0 else 1.0)
    # water level in [top * 2^-R, top]; bisect its log2 for conditioning
    lo, hi = math.log2(top) - float(target_rate), math.log2(top)
    pos = eff[eff > 0]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rate = float(np.sum(np.maximum(0.0, np.log2(pos) - mid)))
        if rate > target_rate:
            lo = mid
        else:
            hi = mid
    gamma = 2.0 ** (0.5 * (lo + hi))
    return _alloc_from_water_level(v, w, eff, gamma)


def _alloc_from_water_level(v, w, eff, gamma) -> BitAllocation:
    with np.errstate(divide="ignore"):
        bits = np.where(eff > 0, np.maximum(0.0, np.log2(np.maximum(eff, 1e-300)) - math.log2(gamma)), 0.0)
    dist = np.minimum(gamma, eff) / w
    return BitAllocation(
        variances=v, weights=w, bits=bits, distortions=dist, water_level=float(gamma)
    )


# ---------------------------------------------------------------------------
# scalar uniform quantization of a complex Gaussian coefficient


def suq_distortion(sigma2: float, levels: int, delta: float) -> float:
    """Exact MSE of the symmetric uniform midpoint quantizer.

    The coefficient is complex Gaussian with variance sigma2; each real
    dimension (variance sigma2/2) is quantized to `levels` points
    +-(2i+1) delta/2 with decision thresholds at multiples of delta and
    saturation beyond +-(levels-1) delta/2.  Returns the complex-coefficient
    distortion (twice the per-dimension MSE), in closed form via the
    Gaussian cdf/pdf.
    """
    if levels < 2 or levels % 2:
        raise ValueError("level count must be an even integer >= 2")
    if delta <= 0:
        raise ValueError("step size must be positive")
    if sigma2 == 0:
        return 0.0
    s = math.sqrt(sigma2 / 2.0)
    half = levels // 2
    i = np.arange(half)
    a = i * delta
    r = (i + 0.5) * delta
    # cell upper edges; the last cell is the overload half-line, handled by
    # zeroing its pdf/edge terms and fixing its cdf at 1
    last = i == half - 1
    b = np.where(last, a, (i + 1) * delta)
    # second moment of (X - r) on [a, b) for X ~ N(0, s^2)
    norm = s * math.sqrt(2 * math.pi)
    pdf_a = np.exp(-0.5 * (a / s) ** 2) / norm
    pdf_b = np.where(last, 0.0, np.exp(-0.5 * (b / s) ** 2) / norm)
    cdf_a = ndtr(a / s)
    cdf_b = np.where(last, 1.0, ndtr(b / s))
    prob = cdf_b - cdf_a
    e1 = s**2 * (pdf_a - pdf_b)
    e2 = s**2 * prob + s**2 * (a * pdf_a - b * pdf_b)
    m2 = e2 - 2.0 * r * e1 + r**2 * prob
    return float(4.0 * np.sum(m2))  # 2 half-lines x 2 real dimensions


def suq_step_asymptotic(sigma2: float, bits: int) -> float:
    """High-rate step-size rule sqrt(4 B sigma^2 / log2 e) 2^(-B/2)."""
    if bits < 2:
        raise ValueError("asymptotic step rule needs at least 2 bits")
    return math.sqrt(4.0 * bits * sigma2 / math.log2(math.e)) * 2.0 ** (-bits / 2.0)


def _golden_min(f, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@functools.lru_cache(maxsize=8192)
def _design_suq_cached(sigma2: float, bits: int, rule: str):
    if bits == 0:
        return math.nan, sigma2
    if bits == 1:
        raise ValueError(
            "1-bit complex coefficients are not supported (no levels per real "
            "dimension); allocate 0 or >= 2 bits"
        )
    if bits < 0:
        raise ValueError("bit count must be nonnegative")
    if sigma2 == 0.0:
        return math.nan, 0.0
    levels = 1 << (bits // 2)
    if rule == "asymptotic":
        delta = suq_step_asymptotic(sigma2, bits)
    elif rule == "optimal":
        sigma = math.sqrt(sigma2)
        delta = _golden_min(
            lambda d: suq_distortion(sigma2, levels, d), 1e-12 * sigma, 10.0 * sigma, 1e-10
        )
    else:
        raise ValueError(f"unknown step rule {rule!r}")
    return delta, suq_distortion(sigma2, levels, delta)


def design_suq(sigma2: float, bits: int, rule: str = "optimal"):
    """Step size and exact distortion for a B-bit complex coefficient.

    Returns (delta, distortion).  bits = 0 is a valid degenerate quantizer
    (zero output, distortion sigma2); bits = 1 is rejected.
    """
    if sigma2 < 0:
        raise ValueError("variance must be nonnegative")
    return _design_suq_cached(float(sigma2), int(bits), rule)


def suq_quantize(values: np.ndarray, delta: float, levels: int) -> np.ndarray:
    """Quantize complex values, each real dimension on the midpoint grid."""
    if levels < 2 or levels % 2:
        raise ValueError("level count must be an even integer >= 2")
    if delta <= 0:
        raise ValueError("step size must be positive")
    values = np.asarray(values)
    half = levels // 2

    def one_dim(x):
        cell = np.minimum(np.floor(np.abs(x) / delta), half - 1)
        lev = (cell + 0.5) * delta
        return np.where(x >= 0, lev, -lev)

    return one_dim(values.real) + 1j * one_dim(values.imag)


# ---------------------------------------------------------------------------
# integer bit allocation for SUQ


def _suq_dist(sigma2: float, bits: int) -> float:
    return design_suq(sigma2, bits)[1]


def greedy_bit_alloc(
    variances, b_total: int, weights=None, step: int = 2
) -> BitAllocation:
    """Greedy integer allocation: grant `step` bits where the weighted
    distortion drop is largest, until the budget cannot fund another grant.

    Ties resolve to the lowest coefficient index; coefficients with zero
    remaining distortion are never granted.
    """
    v, w = _check_variances(variances, weights)
    if b_total < 0:
        raise ValueError("bit budget must be nonnegative")
    if step < 2 or step % 2:
        raise ValueError("grant step must be an even integer >= 2")
    bits = np.zeros(v.size, dtype=int)
    dist = v.copy()
    gain = np.array([w[i] * (dist[i] - _suq_dist(v[i], step)) for i in range(v.size)])
    remaining = int(b_total)
    while remaining >= step:
        i = int(np.argmax(gain))
        if gain[i] <= 0.0:
            break
        bits[i] += step
        dist[i] = _suq_dist(v[i], int(bits[i]))
        gain[i] = w[i] * (dist[i] - _suq_dist(v[i], int(bits[i]) + step))
        remaining -= step
    return _finish_suq_alloc(v, w, bits)


def suq_alloc_from_rwf(variances, b_total: int, weights=None) -> BitAllocation:
    """Integer SUQ allocation guided by reverse waterfilling.

    Each RWF bit count is floored to an even integer; leftover budget is
    spent in 2-bit greedy grants by marginal distortion gain.
    """
    v, w = _check_variances(variances, weights)
    if b_total < 0:
        raise ValueError("bit budget must be nonnegative")
    guide = rwf_by_rate(v, float(b_total), weights=w)
    bits = (2 * np.floor(guide.bits / 2.0)).astype(int)
    remaining = int(b_total) - int(np.sum(bits))
    dist = np.array([_suq_dist(v[i], int(bits[i])) for i in range(v.size)])
    gain = np.array(
        [w[i] * (dist[i] - _suq_dist(v[i], int(bits[i]) + 2)) for i in range(v.size)]
    )
    while remaining >= 2:
        i = int(np.argmax(gain))
        if gain[i] <= 0.0:
            break
        bits[i] += 2
        dist[i] = _suq_dist(v[i], int(bits[i]))
        gain[i] = w[i] * (dist[i] - _suq_dist(v[i], int(bits[i]) + 2))
        remaining -= 2
    return _finish_suq_alloc(v, w, bits)


def _finish_suq_alloc(v, w, bits) -> BitAllocation:
    steps = np.full(v.size, np.nan)
    levels = np.zeros(v.size, dtype=int)
    dist = np.empty(v.size)
    for i in range(v.size):
        delta, d = design_suq(v[i], int(bits[i]))
        dist[i] = d
        if bits[i] >= 2 and v[i] > 0:
            steps[i] = delta
            levels[i] = 1 << (int(bits[i]) // 2)
    return BitAllocation(
        variances=v,
        weights=w,
        bits=bits.astype(float),
        distortions=dist,
        steps=steps,
        levels=levels,
    )


# ---------------------------------------------------------------------------
# Karhunen-Loeve transform and domain synthesis


def kl_transform(stats: ChannelStats):
    """Eigenbasis of the frequency covariance, truncated to its rank.

    Returns (U, phi2): U is N x P with orthonormal columns, phi2 the
    descending positive eigenvalues (P of them, threshold KL_RANK_RTOL
    relative to the largest); sum(phi2) recovers N sigma_H^2.
    """
    w, vec = np.linalg.eigh(freq_covariance(stats))
    w = w.real
    keep = w > KL_RANK_RTOL * float(np.max(w))
    order = np.argsort(w[keep])[::-1]
    return vec[:, keep][:, order], w[keep][order]


def quantize_channel_tdq(
    real: ChannelRealization, alloc: BitAllocation, domain: str, basis=None
) -> np.ndarray:
    """Quantize one coefficient domain and synthesize the (K, M, N) CSIT.

    domain selects the coefficients: "taps" (time-domain filter taps),
    "kl" (Karhunen-Loeve coefficients of the frequency covariance), or
    "paths" (physical path coefficients).  alloc must be operational
    (steps/levels populated) and sized to the domain.  Callers looping over
    realizations of one stats object can pass the kl_transform basis to skip
    recomputing it.
    """
    if not alloc.is_operational:
        raise ValueError(
            "allocation carries no quantizer design; rate-distortion-limit "
            "allocations cannot be applied to realizations"
        )
    if domain == "taps":
        coeffs = real.taps
    elif domain == "kl":
        if basis is None:
            basis, _ = kl_transform(real.stats)
        coeffs = np.einsum("np,kmn->kmp", basis.conj(), real.freq)
    elif domain == "paths":
        if real.path_coeffs is None:
            raise ValueError("realization has no physical path coefficients")
        coeffs = real.path_coeffs
    else:
        raise ValueError(f"unknown domain {domain!r}; expected one of {TDQ_DOMAINS}")
    if coeffs.shape[-1] != alloc.n_coefficients:
        raise ValueError(
            f"allocation covers {alloc.n_coefficients} coefficients but the "
            f"{domain} domain has {coeffs.shape[-1]}"
        )

    quant = np.zeros_like(coeffs)
    for i in range(alloc.n_coefficients):
        if alloc.levels[i] >= 2:
            quant[..., i] = suq_quantize(coeffs[..., i], alloc.steps[i], int(alloc.levels[i]))

    n = real.stats.n_subcarriers
    if domain == "taps":
        return np.fft.fft(quant, n=n, axis=-1)
    if domain == "kl":
        return np.einsum("np,kmp->kmn", basis, quant)
    taps = np.einsum("lp,kmp->kml", real.stats.path_map, quant)
    return np.fft.fft(taps, n=n, axis=-1)


def gaussian_test_channel(
    real: ChannelRealization, distortions, rng: np.random.Generator
) -> np.ndarray:
    """Emulate a rate-distortion-limit tap quantizer on one realization.

    For each tap, hhat = a h + b xi with a = (sigma^2 - D)/sigma^2 and
    b^2 = D (sigma^2 - D)/sigma^2 realizes exactly the per-tap distortion D
    with estimation error orthogonal to the estimate, which is the optimal
    Gaussian forward test channel.  Returns the synthesized (K, M, N) CSIT.
    """
    var = np.real(np.diag(real.stats.tap_cov))
    d = np.asarray(distortions, dtype=float)
    if d.shape != var.shape:
        raise ValueError("need one distortion per tap")
    if np.any(d < -1e-12) or np.any(d > var * (1 + 1e-9) + 1e-300):
        raise ValueError("per-tap distortion must lie in [0, sigma_l^2]")
    d = np.minimum(d, var)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(var > 0, (var - d) / np.maximum(var, 1e-300), 0.0)
        b = np.sqrt(np.maximum(d * (var - d), 0.0) / np.maximum(var, 1e-300))
    z = rng.standard_normal(real.taps.shape + (2,))
    xi = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
    taps_hat = a * real.taps + b * xi
    return np.fft.fft(taps_hat, n=real.stats.n_subcarriers, axis=-1)
