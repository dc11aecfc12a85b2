"""Experiment harness: config files, sweep execution, delimited records.

A sweep crosses feedback schemes with a grid of feedback loads alpha_fb and
downlink SNRs on one channel model, producing one record per cell with the
analytic rate-gap bound, the Monte Carlo genie upper bound, and the
achievable sum-rate lower bound.  Records serialize to CSV with a fixed
header, 9-significant-digit floats, UTF-8, and LF line endings; a sweep is
bit-reproducible from (config, master_seed) for any worker count.

Config files are INI: a [run] section with the grids, an optional [channel]
section for an inline channel model, and one optional [scheme.*] section
per scheme for its knobs.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import analytic_bounds as bounds
from .analog_feedback import AnalogFeedbackConfig, build_interpolator, estimate, simulate_feedback
from .channel_model import (
    ChannelStats,
    PRESET_NAMES,
    TriangularPulse,
    build_dip_stats,
    build_physical_stats,
    preset_stats,
)
from .quantizers import (
    DEFAULT_RVQ_CAP,
    gaussian_test_channel,
    greedy_bit_alloc,
    kl_transform,
    quantize_channel_tdq,
    rvq_build,
    rvq_quantize,
    rwf_by_rate,
    suq_alloc_from_rwf,
)
from .zfbf_rates import mc_rates, perfect_csit_rate

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepRecord",
    "SCHEMES",
    "load_config",
    "run_sweep",
    "emit_csv",
    "parse_csv",
    "records_to_csv_bytes",
]

LN2 = math.log(2.0)

SCHEMES = (
    "analog",
    "rvq",
    "tdq-limit",
    "tdq-suq-rwf",
    "tdq-suq-greedy",
    "kl-suq",
    "phys-tq",
)

#: Schemes whose bit budget is alpha_fb * M * log2(1 + snr).
_DIGITAL = ("tdq-limit", "tdq-suq-rwf", "tdq-suq-greedy", "kl-suq", "phys-tq")


class ConfigError(ValueError):
    """A config file or config override is invalid (CLI exit code 2)."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep definition: channel, system size, grids, and scheme knobs."""

    stats: ChannelStats
    m_antennas: int = 4
    k_users: int = 4
    snr_db_grid: tuple = (10.0,)
    alpha_fb_grid: tuple = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    schemes: tuple = ("analog", "rvq", "tdq-limit", "tdq-suq-rwf")
    n_trials: int = 1000
    master_seed: int = 20260819
    rvq_j_grid: tuple | None = None
    rvq_b_cap: int = DEFAULT_RVQ_CAP
    analog_beta: float = 1.0
    analog_j: int | None = None
    analog_snr_fb_db: float | None = None

    def validate(self) -> None:
        if self.k_users != self.m_antennas:
            raise ConfigError(
                f"this system serves exactly M users (K = M); got K={self.k_users}, "
                f"M={self.m_antennas}"
            )
        if self.m_antennas < 2:
            raise ConfigError("need at least two antennas for direction feedback")
        if not self.snr_db_grid or not self.alpha_fb_grid:
            raise ConfigError("snr_db and alpha_fb grids must be nonempty")
        if any(a < 0 for a in self.alpha_fb_grid):
            raise ConfigError("alpha_fb values must be nonnegative")
        if not self.schemes:
            raise ConfigError("at least one scheme must be selected")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; known: {', '.join(SCHEMES)}")
        if "phys-tq" in self.schemes and self.stats.kind != "physical":
            raise ConfigError("phys-tq needs a physical channel model (path coefficients)")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.rvq_j_grid is not None:
            for j in self.rvq_j_grid:
                if j < 1 or self.stats.n_subcarriers % j:
                    raise ConfigError(f"rvq j_grid entry {j} does not divide N")
        if self.rvq_b_cap < 0:
            raise ConfigError("rvq b_cap must be nonnegative")
        if self.analog_beta < 1.0:
            raise ConfigError("analog beta must be >= 1 (one use per coefficient)")
        if self.analog_j is not None and self.stats.n_subcarriers % self.analog_j:
            raise ConfigError("pinned analog J must divide the subcarrier count")


def _split(raw: str) -> list[str]:
    return raw.replace(",", " ").split()


def _floats(raw: str) -> tuple:
    return tuple(float(x) for x in _split(raw))


def _ints(raw: str) -> tuple:
    return tuple(int(x) for x in _split(raw))


def _build_stats(parser: configparser.ConfigParser, n_subcarriers: int) -> ChannelStats:
    run = parser["run"]
    preset = run.get("preset", fallback=None)
    if preset is not None:
        if parser.has_section("channel"):
            raise ConfigError("give either run.preset or a [channel] section, not both")
        try:
            return preset_stats(preset, n_subcarriers)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if not parser.has_section("channel"):
        raise ConfigError("config needs run.preset or a [channel] section")
    ch = parser["channel"]
    if "dip" in ch:
        return build_dip_stats(_floats(ch["dip"]), n_subcarriers)
    if "delays_us" in ch:
        delays = np.array(_floats(ch["delays_us"])) * 1e-6
        if "path_vars_db" in ch:
            path_vars = 10.0 ** (np.array(_floats(ch["path_vars_db"])) / 10.0)
        elif "path_vars" in ch:
            path_vars = np.array(_floats(ch["path_vars"]))
        else:
            raise ConfigError("[channel] with delays needs path_vars or path_vars_db")
        rate = ch.getfloat("sample_rate_hz", fallback=1e6)
        shape = ch.get("pulse", fallback="triangular")
        if shape != "triangular":
            raise ConfigError("only the triangular pulse is configurable from a file")
        n_taps = ch.getint("n_taps", fallback=None)
        try:
            return build_physical_stats(
                delays, path_vars, TriangularPulse(2.0 / rate), rate,
                n_subcarriers, n_taps=n_taps,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError("[channel] must give dip=... or delays_us=...")


def load_config(path) -> ExperimentConfig:
    """Parse and validate an INI config file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    if not parser.has_section("run"):
        raise ConfigError("config needs a [run] section")
    run = parser["run"]
    try:
        n_sub = run.getint("n_subcarriers", fallback=64)
        stats = _build_stats(parser, n_sub)
        analog = parser["scheme.analog"] if parser.has_section("scheme.analog") else {}
        rvq = parser["scheme.rvq"] if parser.has_section("scheme.rvq") else {}
        cfg = ExperimentConfig(
            stats=stats,
            m_antennas=run.getint("m_antennas", fallback=4),
            k_users=run.getint("k_users", fallback=4),
            snr_db_grid=_floats(run.get("snr_db", fallback="10")),
            alpha_fb_grid=_floats(run.get("alpha_fb", fallback="2 4 6 8 10 12")),
            schemes=tuple(_split(run.get("schemes", fallback="analog rvq tdq-limit tdq-suq-rwf"))),
            n_trials=run.getint("n_trials", fallback=1000),
            master_seed=run.getint("master_seed", fallback=20260819),
            rvq_j_grid=_ints(rvq["j_grid"]) if "j_grid" in rvq else None,
            rvq_b_cap=int(rvq.get("b_cap", DEFAULT_RVQ_CAP)),
            analog_beta=float(analog.get("beta", 1.0)),
            analog_j=int(analog["j_clusters"]) if "j_clusters" in analog else None,
            analog_snr_fb_db=float(analog["snr_fb_db"]) if "snr_fb_db" in analog else None,
        )
    except (ValueError, configparser.Error) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# sweep records


@dataclass(frozen=True)
class SweepRecord:
    """One (scheme, alpha_fb, snr) cell.  Rates are sum rates in bits/channel use.

    J is the cluster count actually used (0 where not applicable); B_tot_bits
    the scheme's total bit budget (nan for analog); analytic_gap_bits the
    per-user rate-gap bound (nan in simulate mode, where the lower bound
    comes from the measured interference instead); stderr_bits the one-sigma
    Monte Carlo error of the genie estimate.  status is empty unless the cell
    hit a resource cap or infeasibility.
    """

    scheme: str
    alpha_fb: float
    snr_db: float
    J: int
    B_tot_bits: float
    rate_lower_bits: float
    rate_genie_upper_bits: float
    analytic_gap_bits: float
    rate_csit_bits: float
    n_trials: int
    stderr_bits: float
    seed: int
    status: str = ""


_FIELDS = [f.name for f in fields(SweepRecord)]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def emit_csv(records, out) -> None:
    """Write records to a path or text stream: fixed header, LF, UTF-8."""
    own = isinstance(out, (str, Path))
    try:
        stream = open(out, "w", encoding="utf-8", newline="") if own else out
    except OSError as exc:
        raise OSError(f"cannot write records to {out}: {exc}") from exc
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(_FIELDS)
        for rec in records:
            writer.writerow(_fmt(getattr(rec, name)) for name in _FIELDS)
    finally:
        if own:
            stream.close()


def parse_csv(source) -> list[SweepRecord]:
    """Read records back; inverse of emit_csv at 9 significant digits."""
    own = isinstance(source, (str, Path))
    stream = open(source, "r", encoding="utf-8", newline="") if own else source
    try:
        reader = csv.reader(stream)
        header = next(reader)
        if header != _FIELDS:
            raise ValueError(f"unexpected CSV header {header!r}")
        types = {f.name: f.type for f in fields(SweepRecord)}
        out = []
        for row in reader:
            kwargs = {}
            for name, cell in zip(_FIELDS, row):
                t = types[name]
                if t == "int":
                    kwargs[name] = int(cell)
                elif t == "float":
                    kwargs[name] = float(cell)
                else:
                    kwargs[name] = cell
            out.append(SweepRecord(**kwargs))
        return out
    finally:
        if own:
            stream.close()


def records_to_csv_bytes(records) -> bytes:
    buf = io.StringIO()
    emit_csv(records, buf)
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# per-scheme cell planning


@dataclass(frozen=True)
class _Cell:
    """Resolved parameters for one grid cell, ready to bound and simulate."""

    j: int
    b_tot: float
    gap: float  # analytic, nats per user
    scheme_fn: object  # callable(real, rng) -> CSIT, or None if infeasible
    status: str = ""


def _feasible_analog_js(cfg: ExperimentConfig, alpha_fb: float) -> list[int]:
    if cfg.analog_j is not None:
        return [cfg.analog_j] if alpha_fb >= cfg.analog_j * cfg.analog_beta else []
    return [j for j in bounds.divisors(cfg.stats.n_subcarriers) if j * cfg.analog_beta <= alpha_fb]


def _plan_analog(cfg: ExperimentConfig, alpha_fb: float, snr: float) -> _Cell:
    snr_fb = snr if cfg.analog_snr_fb_db is None else 10 ** (cfg.analog_snr_fb_db / 10)
    js = _feasible_analog_js(cfg, alpha_fb)
    if not js:
        return _Cell(0, math.nan, math.nan, None, status="analog-infeasible")
    best = None
    for j in js:
        beta = alpha_fb / j
        gap = bounds.bound_analog(cfg.stats, j, beta, snr, cfg.m_antennas, snr_fb=snr_fb)
        if best is None or gap < best[0] - 1e-15:
            best = (gap, j, beta)
    gap, j, beta = best
    fb_cfg = AnalogFeedbackConfig(j_clusters=j, beta=beta, snr_fb=snr_fb)
    interp = build_interpolator(cfg.stats, fb_cfg)

    def scheme(real, rng):
        return estimate(interp, simulate_feedback(real, fb_cfg, rng))

    return _Cell(j, math.nan, gap, scheme)


def _plan_rvq(cfg: ExperimentConfig, alpha_fb: float, snr: float) -> _Cell:
    b_tot = bounds.budget_to_bits("rvq", alpha_fb, snr, cfg.m_antennas)
    grid = list(cfg.rvq_j_grid) if cfg.rvq_j_grid else bounds.divisors(cfg.stats.n_subcarriers)
    feasible = [j for j in grid if math.floor(b_tot / j) <= cfg.rvq_b_cap]
    status = ""
    if not feasible:
        return _Cell(0, b_tot, math.nan, None, status="rvq-bits-over-cap")
    gap, j, _ = bounds.bound_rvq_budget(cfg.stats, alpha_fb, snr, cfg.m_antennas, j_grid=feasible)
    if set(feasible) != set(grid):
        unconstrained = bounds.bound_rvq_budget(cfg.stats, alpha_fb, snr, cfg.m_antennas, j_grid=grid)
        if unconstrained[1] != j:
            status = "rvq-bits-capped"
    bits = int(math.floor(b_tot / j))
    stats = cfg.stats
    n = stats.n_subcarriers
    centers = np.arange(j) * (n // j)
    offs = bounds.cluster_offsets(n, j)
    cluster_of = np.empty(n, dtype=int)
    cluster_of[(centers[:, None] + offs[None, :]) % n] = np.arange(j)[:, None]
    cap = cfg.rvq_b_cap

    def scheme(real, rng):
        k_users, _, _ = real.freq.shape
        csit = np.empty_like(real.freq)
        for k in range(k_users):
            cb = rvq_build(cfg.m_antennas, bits, rng, cap=cap)
            heads = real.freq[k][:, centers].T  # (J, M)
            _, words = rvq_quantize(heads, cb)
            csit[k] = words[cluster_of].T
        return csit

    return _Cell(j, b_tot, gap, scheme, status=status)


def _plan_tdq(cfg: ExperimentConfig, kind: str, alpha_fb: float, snr: float) -> _Cell:
    stats = cfg.stats
    m = cfg.m_antennas
    b_tot = bounds.budget_to_bits("digital", alpha_fb, snr, m)
    per_antenna = b_tot / m

    if kind == "tdq-limit":
        var = np.real(np.diag(stats.tap_cov))
        alloc = rwf_by_rate(var, per_antenna)
        gap = bounds.bound_tdq_limit(stats, alloc.total_distortion, snr, m, domain="taps")
        dist = alloc.distortions

        def scheme(real, rng, _d=dist):
            return gaussian_test_channel(real, _d, rng)

        return _Cell(0, b_tot, gap, scheme)

    budget = int(math.floor(per_antenna))
    if kind in ("tdq-suq-rwf", "tdq-suq-greedy"):
        var = np.real(np.diag(stats.tap_cov))
        maker = suq_alloc_from_rwf if kind == "tdq-suq-rwf" else greedy_bit_alloc
        alloc = maker(var, budget)
        gap = bounds.bound_suq(alloc, snr, m, domain="taps")

        def scheme(real, rng, _a=alloc):
            return quantize_channel_tdq(real, _a, "taps")

        return _Cell(0, b_tot, gap, scheme)

    if kind == "kl-suq":
        basis, phi2 = kl_transform(stats)
        alloc = greedy_bit_alloc(phi2, budget)
        gap = bounds.bound_suq(alloc, snr, m, domain="kl", n_subcarriers=stats.n_subcarriers)

        def scheme(real, rng, _a=alloc, _b=basis):
            return quantize_channel_tdq(real, _a, "kl", basis=_b)

        return _Cell(0, b_tot, gap, scheme)

    # phys-tq: weighted greedy over the physical path coefficients
    alloc = greedy_bit_alloc(stats.path_vars, budget, weights=stats.path_weights)
    gap = bounds.bound_suq(alloc, snr, m, domain="paths")

    def scheme(real, rng, _a=alloc):
        return quantize_channel_tdq(real, _a, "paths")

    return _Cell(0, b_tot, gap, scheme)


def _plan_cell(cfg: ExperimentConfig, scheme: str, alpha_fb: float, snr: float) -> _Cell:
    if scheme == "analog":
        return _plan_analog(cfg, alpha_fb, snr)
    if scheme == "rvq":
        return _plan_rvq(cfg, alpha_fb, snr)
    return _plan_tdq(cfg, scheme, alpha_fb, snr)


# ---------------------------------------------------------------------------
# sweep driver


def run_sweep(
    cfg: ExperimentConfig,
    mode: str = "sweep",
    jobs: int = 1,
    log=None,
) -> list[SweepRecord]:
    """Evaluate every (scheme, alpha_fb, snr) cell of the config.

    mode "bounds" emits analytic columns only (n_trials 0), "simulate" the
    Monte Carlo columns only (the lower bound then comes from the measured
    interference), "sweep" both.  Records appear in deterministic grid
    order: schemes in config order, then alpha_fb, then snr.  log, if
    given, receives one progress line per cell (degenerate beamformer
    counts included); it must not write to the CSV stream.
    """
    if mode not in ("sweep", "bounds", "simulate"):
        raise ValueError(f"unknown mode {mode!r}")
    cfg.validate()
    k = cfg.k_users
    records = []
    stream = 0
    for scheme in cfg.schemes:
        for alpha_fb in cfg.alpha_fb_grid:
            for snr_db in cfg.snr_db_grid:
                snr = 10.0 ** (snr_db / 10.0)
                cell = _plan_cell(cfg, scheme, alpha_fb, snr)
                csit_rate = perfect_csit_rate(snr, cfg.m_antennas, cfg.stats.sigma_h2)
                genie = stderr = math.nan
                n_trials = 0
                degenerate = 0
                gap = cell.gap
                if mode != "bounds" and cell.scheme_fn is not None:
                    est = mc_rates(
                        cfg.stats, cell.scheme_fn, snr, cfg.m_antennas, k,
                        cfg.n_trials, cfg.master_seed, jobs=jobs, stream=stream,
                    )
                    genie = k * est.genie_upper / LN2
                    stderr = k * est.stderr_genie / LN2
                    n_trials = est.n_trials
                    degenerate = est.degenerate_cells
                    if mode == "simulate":
                        gap = est.gap
                lower = (
                    k * max(0.0, csit_rate - gap) / LN2 if not math.isnan(gap) else math.nan
                )
                bound_bits = cell.gap / LN2 if not math.isnan(cell.gap) else math.nan
                records.append(
                    SweepRecord(
                        scheme=scheme,
                        alpha_fb=alpha_fb,
                        snr_db=snr_db,
                        J=cell.j,
                        B_tot_bits=cell.b_tot,
                        rate_lower_bits=lower,
                        rate_genie_upper_bits=genie,
                        analytic_gap_bits=(math.nan if mode == "simulate" else bound_bits),
                        rate_csit_bits=k * csit_rate / LN2,
                        n_trials=n_trials,
                        stderr_bits=stderr,
                        seed=cfg.master_seed,
                        status=cell.status,
                    )
                )
                stream += 1
                if log is not None:
                    rec = records[-1]
                    line = (
                        f"{rec.scheme} alpha_fb={rec.alpha_fb:g} snr={rec.snr_db:g}dB: "
                        f"lower={rec.rate_lower_bits:.3f} genie={rec.rate_genie_upper_bits:.3f}"
                    )
                    if degenerate:
                        line += f" ({degenerate} degenerate subcarrier slots)"
                    if rec.status:
                        line += f" [{rec.status}]"
                    log(line)
    return records


def apply_overrides(cfg: ExperimentConfig, seed=None, trials=None) -> ExperimentConfig:
    """CLI-level overrides of the config's seed and trial count."""
    if seed is not None:
        cfg = replace(cfg, master_seed=int(seed))
    if trials is not None:
        cfg = replace(cfg, n_trials=int(trials))
    cfg.validate()
    return cfg
