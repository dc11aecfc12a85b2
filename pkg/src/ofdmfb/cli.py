"""Command-line front end.

Subcommands:
  bounds    analytic rate-gap bounds only (no Monte Carlo)
  simulate  Monte Carlo rates only (lower bound from measured interference)
  sweep     analytic bounds plus Monte Carlo genie upper bounds
  presets   list built-in channel models
  selftest  fast internal consistency checks

Exit codes: 0 success, 2 bad config or arguments, 3 a resource cap or
infeasible cell was hit while --strict was set.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__
from .analog_feedback import AnalogFeedbackConfig, build_interpolator
from .analytic_bounds import bound_analog
from .channel_model import PRESET_NAMES, preset_stats, freq_correlation, sample_channel
from .harness import (
    ConfigError,
    apply_overrides,
    emit_csv,
    load_config,
    run_sweep,
)
from .quantizers import design_suq, rwf_by_distortion
from .rng import substream
from .zfbf_rates import mc_rates, perfect_csit_rate

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ofdmfb",
        description="Limited-feedback MIMO-OFDM downlink: rate bounds and simulation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (
        ("bounds", "analytic rate-gap bounds for every grid cell"),
        ("simulate", "Monte Carlo rate estimates for every grid cell"),
        ("sweep", "analytic bounds plus Monte Carlo genie upper bounds"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="INI experiment description")
        p.add_argument("--out", default=None, help="CSV output path (default stdout)")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--trials", type=int, default=None, help="override n_trials")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for the Monte Carlo")
        p.add_argument("--plot", metavar="DIR", default=None,
                       help="also render sum-rate figures into DIR")
        p.add_argument("--strict", action="store_true",
                       help="exit 3 if any cell hits a resource cap")

    sub.add_parser("presets", help="list built-in channel models")
    sub.add_parser("selftest", help="run fast internal consistency checks")
    return parser


def _cmd_grid(args, mode: str) -> int:
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, seed=args.seed, trials=args.trials)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return 2
    log = None if mode == "bounds" else (lambda msg: print(msg, file=sys.stderr))
    records = run_sweep(cfg, mode=mode, jobs=args.jobs, log=log)
    if args.out is None:
        emit_csv(records, sys.stdout)
    else:
        emit_csv(records, args.out)
    if args.plot is not None:
        from .plots import render_figures

        for path in render_figures(records, args.plot):
            print(f"wrote {path}", file=sys.stderr)
    if args.strict and any(r.status for r in records):
        return 3
    return 0


def _cmd_presets() -> int:
    for name in PRESET_NAMES:
        stats = preset_stats(name)
        line = (
            f"{name}: kind={stats.kind} taps={stats.n_taps} "
            f"paths={stats.n_paths if stats.kind == 'physical' else '-'} "
            f"sigma_H^2={stats.sigma_h2:.6g}"
        )
        print(line)
    return 0


def _selftest_checks():
    stats = preset_stats("paper-dip5")
    snr, m = 10.0, 4

    def check_correlation():
        for d in range(1, 8):
            c1 = freq_correlation(stats, d)
            c2 = freq_correlation(stats, -d)
            assert abs(c1 - np.conj(c2)) < 1e-12
            assert abs(freq_correlation(stats, d + stats.n_subcarriers) - c1) < 1e-12
        assert abs(freq_correlation(stats, 0) - 1.0) < 1e-12

    def check_csit_rate():
        closed = perfect_csit_rate(snr, m, stats.sigma_h2)
        rng = substream(7, 0)
        acc = 0.0
        trials = 400
        for _ in range(trials):
            real = sample_channel(stats, 1, m, rng)
            gains = np.abs(real.freq[0]) ** 2  # (M, N)
            acc += float(np.mean(np.log1p(snr / m * np.sum(gains, axis=0))))
        mc = acc / trials
        assert abs(mc - closed) / closed < 0.05, (mc, closed)

    def check_analog_bound():
        for j in (4, 8, 16):
            fb = AnalogFeedbackConfig(j_clusters=j, beta=2.0, snr_fb=snr)
            interp = build_interpolator(stats, fb)
            exact = math.log1p((m - 1) / m * snr * interp.err_var)
            bound = bound_analog(stats, j, fb.beta, snr, m, snr_fb=snr)
            assert bound >= exact - 1e-12, (j, bound, exact)

    def check_suq():
        delta, dist = design_suq(1.0, 2)
        assert abs(delta - 2.0 / math.sqrt(math.pi)) < 1e-6
        assert abs(dist - (1.0 - 2.0 / math.pi)) < 1e-8

    def check_rwf():
        alloc = rwf_by_distortion(np.array([1.0, 0.5, 0.25]), 0.3)
        assert abs(alloc.total_distortion - 0.3) < 1e-9
        assert np.all(alloc.bits >= 0)

    def check_determinism():
        def scheme(real, rng):
            return real.freq + 0.1 * _noise(rng, real.freq.shape)

        def _noise(rng, shape):
            z = rng.standard_normal(shape + (2,))
            return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)

        a = mc_rates(stats, scheme, snr, m, m, 24, 99, jobs=1)
        b = mc_rates(stats, scheme, snr, m, m, 24, 99, jobs=3)
        assert a.genie_upper == b.genie_upper
        assert a.gap == b.gap

    return [
        ("frequency correlation symmetry", check_correlation),
        ("perfect-CSIT closed form vs Monte Carlo", check_csit_rate),
        ("analog gap bound dominates exact error", check_analog_bound),
        ("scalar quantizer two-bit optimum", check_suq),
        ("reverse water filling consistency", check_rwf),
        ("Monte Carlo determinism across workers", check_determinism),
    ]


def _cmd_selftest() -> int:
    failures = 0
    for label, fn in _selftest_checks():
        try:
            fn()
        except AssertionError as exc:
            failures += 1
            print(f"selftest: {label} ... FAIL ({exc})")
        else:
            print(f"selftest: {label} ... ok")
    if failures:
        print(f"selftest: {failures} check(s) failed")
        return 1
    print("selftest: all checks passed")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "presets":
        return _cmd_presets()
    if args.command == "selftest":
        return _cmd_selftest()
    return _cmd_grid(args, args.command)


if __name__ == "__main__":
    sys.exit(main())
