"""Wideband block-fading channel: second-order statistics and sampling.

The downlink between each base-station antenna and each user is an L-tap
frequency-selective channel, constant over a frame.  Two descriptions are
supported:

* a delay-intensity profile (DIP): independent taps h[l] ~ CN(0, sigma_l^2);
* a physical wide-sense-stationary uncorrelated-scattering model: P specular
  paths with delays tau_p and powers mu_p^2, observed through the combined
  transmit/receive pulse, so the taps are h = Psi c with c ~ CN(0, diag(mu^2))
  and Psi[l, p] = psi(l/W - tau_p).

The N-point frequency response uses the unitary DFT convention
F[n, l] = exp(-2j pi n l / N) / sqrt(N) with H = sqrt(N) F [h; 0], i.e.
H[n] = sum_l h[l] exp(-2j pi n l / N), which np.fft.fft computes directly.
The frequency covariance is Sigma_H = N F_L Sigma_h F_L^H, whose diagonal is
constant and equal to sigma_H^2 = trace(Sigma_h).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TriangularPulse",
    "RaisedCosinePulse",
    "TabulatedPulse",
    "ChannelStats",
    "ChannelRealization",
    "build_dip_stats",
    "build_physical_stats",
    "sample_channel",
    "freq_correlation",
    "freq_covariance",
    "dft_submatrix",
    "preset_stats",
    "PRESET_NAMES",
]

# Fraction of a path's pulse energy allowed to fall outside taps 0..L-1.
_TRUNCATION_TOL = 1e-6


# ---------------------------------------------------------------------------
# pulse shapes


@dataclass(frozen=True)
class TriangularPulse:
    """Triangle of unit peak at t = 0, zero outside |t| >= base_width/2.

    The convolution of the D/A and A/D rectangles of width 1/W corresponds
    to base_width = 2/W.
    """

    base_width: float

    def __post_init__(self):
        if self.base_width <= 0:
            raise ValueError("pulse base width must be positive")

    @property
    def half_support(self) -> float:
        return self.base_width / 2.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.maximum(0.0, 1.0 - np.abs(t) / self.half_support)


@dataclass(frozen=True)
class RaisedCosinePulse:
    """Raised-cosine pulse with the given rolloff, truncated to span symbols.

    symbol_time sets the zero-crossing spacing; the pulse is supported on
    |t| <= span * symbol_time / 2.
    """

    rolloff: float
    span: float
    symbol_time: float

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must lie in [0, 1]")
        if self.span <= 0 or self.symbol_time <= 0:
            raise ValueError("span and symbol_time must be positive")

    @property
    def half_support(self) -> float:
        return self.span * self.symbol_time / 2.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        x = t / self.symbol_time
        beta = self.rolloff
        with np.errstate(divide="ignore", invalid="ignore"):
            num = np.sinc(x) * np.cos(np.pi * beta * x)
            den = 1.0 - (2.0 * beta * x) ** 2
            out = num / den
        if beta > 0:
            # limit at the removable singularity |t| = T/(2 beta)
            sing = np.isclose(np.abs(den), 0.0, atol=1e-12)
            out = np.where(sing, (np.pi / 4.0) * np.sinc(1.0 / (2.0 * beta)), out)
        out = np.where(np.abs(t) <= self.half_support, out, 0.0)
        return out


@dataclass(frozen=True)
class TabulatedPulse:
    """Pulse given by samples (times, values), linearly interpolated."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("tabulated pulse needs matching 1-D times and values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("tabulated pulse times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def half_support(self) -> float:
        return float(max(abs(self.times[0]), abs(self.times[-1])))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)


# ---------------------------------------------------------------------------
# channel statistics


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """Second-order description of the wideband channel.

    tap_cov is the L x L Hermitian covariance of the time-domain taps; for a
    DIP model it is diagonal.  For a physical model, path_map holds Psi
    (L x P) and path_vars the per-path powers, with
    tap_cov = Psi diag(path_vars) Psi^H.
    """

    n_subcarriers: int
    tap_cov: np.ndarray
    kind: str  # "dip" | "physical"
    dip: np.ndarray | None = None
    path_map: np.ndarray | None = None
    path_vars: np.ndarray | None = None

    def __post_init__(self):
        # shared freely across workers, so the arrays must not be writable
        for arr in (self.tap_cov, self.dip, self.path_map, self.path_vars):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n_taps(self) -> int:
        return self.tap_cov.shape[0]

    @property
    def n_paths(self) -> int:
        return 0 if self.path_vars is None else self.path_vars.size

    @property
    def sigma_h2(self) -> float:
        """Per-subcarrier channel power sigma_H^2 = trace(tap_cov)."""
        return float(np.real(np.trace(self.tap_cov)))

    @property
    def path_weights(self) -> np.ndarray:
        """diag(Psi^H Psi): per-path weight of its coefficient in the taps."""
        if self.path_map is None:
            raise ValueError("path weights are only defined for physical stats")
        return np.einsum("lp,lp->p", self.path_map, self.path_map).real


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One frame's channel for all users and antennas.

    taps:  (K, M, L) time-domain taps
    freq:  (K, M, N) frequency response on the N subcarriers
    path_coeffs: (K, M, P) physical path coefficients, physical model only
    """

    taps: np.ndarray
    freq: np.ndarray
    stats: ChannelStats
    path_coeffs: np.ndarray | None = None


def _validate_common(n_subcarriers: int, n_taps: int) -> None:
    if n_subcarriers < 1:
        raise ValueError("need at least one subcarrier")
    if not 1 <= n_taps <= n_subcarriers:
        raise ValueError(
            f"tap count must satisfy 1 <= L <= N, got L={n_taps}, N={n_subcarriers}"
        )


def build_dip_stats(dip, n_subcarriers: int) -> ChannelStats:
    """Stats for independent taps with the given delay-intensity profile."""
    dip = np.asarray(dip, dtype=float)
    if dip.ndim != 1 or dip.size == 0:
        raise ValueError("delay-intensity profile must be a nonempty 1-D sequence")
    if np.any(dip < 0):
        raise ValueError("tap variances must be nonnegative")
    if not np.any(dip > 0):
        raise ValueError("at least one tap variance must be positive")
    _validate_common(n_subcarriers, dip.size)
    return ChannelStats(
        n_subcarriers=int(n_subcarriers),
        tap_cov=np.diag(dip).astype(complex),
        kind="dip",
        dip=dip.copy(),
    )


def build_physical_stats(
    delays,
    path_vars,
    pulse,
    sample_rate: float,
    n_subcarriers: int,
    n_taps: int | None = None,
) -> ChannelStats:
    """Stats for a specular multipath model seen through a pulse shape.

    delays are in seconds, path_vars are the per-path powers mu_p^2, and
    sample_rate is the tap spacing W.  When n_taps is omitted, the smallest
    L capturing every path's pulse energy is used; an explicit L that
    truncates more than a 1e-6 fraction of any path's energy is rejected.
    """
    delays = np.asarray(delays, dtype=float)
    path_vars = np.asarray(path_vars, dtype=float)
    if delays.ndim != 1 or delays.shape != path_vars.shape or delays.size == 0:
        raise ValueError("delays and path powers must be matching nonempty 1-D sequences")
    if np.any(delays < 0):
        raise ValueError("path delays must be nonnegative")
    if np.any(path_vars <= 0):
        raise ValueError("path powers must be positive")
    if sample_rate <= 0:
        raise ValueError("sample rate must be positive")

    # candidate tap range generous enough to hold every pulse tail
    half = pulse.half_support * sample_rate  # in samples
    lo = int(np.floor(delays.min() * sample_rate - half)) - 1
    hi = int(np.ceil(delays.max() * sample_rate + half)) + 2
    l_wide = np.arange(lo, hi)

    def column(tau):
        return pulse((l_wide - tau * sample_rate) / sample_rate)

    wide = np.stack([column(tau) for tau in delays], axis=1)  # (wide, P)
    energy = np.sum(wide**2, axis=0)
    if np.any(energy <= 0):
        raise ValueError("a path has zero pulse energy on the tap grid")

    nonzero_rows = np.nonzero(np.any(wide != 0.0, axis=1))[0]
    needed = l_wide[nonzero_rows[-1]] + 1 if nonzero_rows.size else 1
    if n_taps is None:
        n_taps = max(int(needed), 1)
    _validate_common(n_subcarriers, n_taps)

    inside = (l_wide >= 0) & (l_wide < n_taps)
    captured = np.sum(wide[inside] ** 2, axis=0)
    tail = 1.0 - captured / energy
    if np.any(tail > _TRUNCATION_TOL):
        worst = int(np.argmax(tail))
        raise ValueError(
            f"L={n_taps} truncates path {worst} (tail fraction {tail[worst]:.2e}); "
            f"need L >= {int(needed)}"
        )

    psi = wide[inside]
    if psi.shape[0] < n_taps:  # pad taps beyond the last pulse tail with zeros
        pad = np.zeros((n_taps - psi.shape[0], delays.size))
        psi = np.vstack([psi, pad])
    tap_cov = (psi * path_vars) @ psi.T
    return ChannelStats(
        n_subcarriers=int(n_subcarriers),
        tap_cov=tap_cov.astype(complex),
        kind="physical",
        path_map=psi,
        path_vars=path_vars.copy(),
    )


# ---------------------------------------------------------------------------
# sampling and frequency-domain statistics


def sample_channel(
    stats: ChannelStats, m_antennas: int, k_users: int, rng: np.random.Generator
) -> ChannelRealization:
    """Draw one frame of i.i.d. user/antenna channels from stats."""
    if m_antennas < 1 or k_users < 1:
        raise ValueError("antenna and user counts must be positive")
    n = stats.n_subcarriers
    if stats.kind == "dip":
        scale = np.sqrt(stats.dip / 2.0)
        z = rng.standard_normal((k_users, m_antennas, stats.n_taps, 2))
        taps = (z[..., 0] + 1j * z[..., 1]) * scale
        coeffs = None
    else:
        scale = np.sqrt(stats.path_vars / 2.0)
        z = rng.standard_normal((k_users, m_antennas, stats.n_paths, 2))
        coeffs = (z[..., 0] + 1j * z[..., 1]) * scale
        taps = np.einsum("lp,kmp->kml", stats.path_map, coeffs)
    freq = np.fft.fft(taps, n=n, axis=-1)
    return ChannelRealization(taps=taps, freq=freq, stats=stats, path_coeffs=coeffs)


def dft_submatrix(n_subcarriers: int, n_taps: int) -> np.ndarray:
    """First n_taps columns of the N-point unitary DFT matrix."""
    n = np.arange(n_subcarriers)[:, None]
    l = np.arange(n_taps)[None, :]
    return np.exp(-2j * np.pi * n * l / n_subcarriers) / np.sqrt(n_subcarriers)


def freq_covariance(stats: ChannelStats) -> np.ndarray:
    """N x N covariance of the frequency response, N F_L Sigma_h F_L^H."""
    f_l = dft_submatrix(stats.n_subcarriers, stats.n_taps)
    return stats.n_subcarriers * (f_l @ stats.tap_cov @ f_l.conj().T)


def freq_correlation(stats: ChannelStats, delta: int) -> complex:
    """Normalized correlation c(delta) = E[H[n+delta] H[n]^*] / sigma_H^2.

    Equals the average cyclic diagonal of the exact frequency covariance;
    cross-tap covariance terms cancel in that average, leaving the diagonal
    of tap_cov weighted by the DFT phases.  Periodic in delta with period N
    and conjugate-symmetric: c(-delta) = c(delta)^*.
    """
    diag = np.real(np.diag(stats.tap_cov))
    l = np.arange(stats.n_taps)
    phases = np.exp(-2j * np.pi * l * delta / stats.n_subcarriers)
    return complex(np.sum(diag * phases) / stats.sigma_h2)


# ---------------------------------------------------------------------------
# presets

#: 5-tap exponential-like profile used throughout the numerical studies.
_DIP5 = np.array([0.5, 0.24, 0.17, 0.06, 0.03])

#: SUI-4 omnidirectional: delays in seconds, powers 0 / -5 / -8 dB, W = 1 MHz.
_SUI4_DELAYS = np.array([0.0, 1.5e-6, 4.0e-6])
_SUI4_VARS = np.array([1.0, 10 ** (-5 / 10), 10 ** (-8 / 10)])
_SUI4_RATE = 1.0e6

PRESET_NAMES = ("paper-dip5", "sui4-omni")


def preset_stats(name: str, n_subcarriers: int = 64) -> ChannelStats:
    """Channel statistics for a named preset."""
    if name == "paper-dip5":
        return build_dip_stats(_DIP5, n_subcarriers)
    if name == "sui4-omni":
        pulse = TriangularPulse(base_width=2.0 / _SUI4_RATE)
        return build_physical_stats(
            _SUI4_DELAYS, _SUI4_VARS, pulse, _SUI4_RATE, n_subcarriers
        )
    raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
