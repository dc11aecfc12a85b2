"""Experiment harness: config parsing, sweep orchestration, CSV, CLI."""

import io
import math

import numpy as np
import pytest

from ofdmfb import (
    ConfigError,
    ExperimentConfig,
    SweepRecord,
    budget_to_bits,
    build_dip_stats,
    emit_csv,
    load_config,
    parse_csv,
    run_sweep,
)
from ofdmfb.cli import main
from ofdmfb.harness import apply_overrides, records_to_csv_bytes

DIP5 = (0.5, 0.24, 0.17, 0.06, 0.03)

SMALL_INI = """\
[run]
preset = paper-dip5
snr_db = 10
alpha_fb = 4, 8
schemes = analog, rvq, tdq-limit, tdq-suq-rwf
n_trials = 40
master_seed = 99
"""


def write_ini(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def small_cfg(**overrides):
    base = dict(
        stats=build_dip_stats(DIP5, 64),
        snr_db_grid=(10.0,),
        alpha_fb_grid=(4.0,),
        schemes=("tdq-limit",),
        n_trials=20,
        master_seed=5,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# configuration


def test_load_config_roundtrip(tmp_path):
    cfg = load_config(write_ini(tmp_path, SMALL_INI))
    assert cfg.snr_db_grid == (10.0,)
    assert cfg.alpha_fb_grid == (4.0, 8.0)
    assert cfg.schemes == ("analog", "rvq", "tdq-limit", "tdq-suq-rwf")
    assert cfg.n_trials == 40
    assert cfg.master_seed == 99
    assert abs(cfg.stats.sigma_h2 - 1.0) < 1e-12


def test_load_config_inline_comments_and_channel_section(tmp_path):
    ini = """\
[run]
n_subcarriers = 64
snr_db = 0, 10 ; downlink operating points
alpha_fb = 6
schemes = tdq-suq-greedy
n_trials = 10  # small smoke run

[channel]
dip = 0.5, 0.24, 0.17, 0.06, 0.03
"""
    cfg = load_config(write_ini(tmp_path, ini))
    assert cfg.snr_db_grid == (0.0, 10.0)
    assert cfg.stats.n_taps == 5


def test_load_config_physical_channel(tmp_path):
    ini = """\
[run]
n_subcarriers = 64
snr_db = 10
alpha_fb = 4
schemes = phys-tq
n_trials = 10

[channel]
delays_us = 0.0, 1.5, 4.0
path_vars_db = 0, -4, -8
sample_rate_hz = 2.5e6
pulse = triangular
n_taps = 16
"""
    cfg = load_config(write_ini(tmp_path, ini))
    assert cfg.stats.n_paths == 3
    cfg.validate()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"))
    bad = SMALL_INI.replace("[run]\n", "[run]\nk_users = 3\n")
    with pytest.raises(ConfigError, match="K = M"):
        load_config(write_ini(tmp_path, bad, "k.ini"))
    bad = SMALL_INI.replace("tdq-limit", "mystery-scheme")
    with pytest.raises(ConfigError, match="scheme"):
        load_config(write_ini(tmp_path, bad, "s.ini"))
    both = SMALL_INI + "\n[channel]\ndip = 1.0\n"
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, both, "b.ini"))
    neither = SMALL_INI.replace("preset = paper-dip5\n", "")
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, neither, "n.ini"))


def test_validate_rejections():
    with pytest.raises(ConfigError):
        small_cfg(k_users=3).validate()
    with pytest.raises(ConfigError):
        small_cfg(alpha_fb_grid=(-1.0,)).validate()
    with pytest.raises(ConfigError):
        small_cfg(schemes=("nope",)).validate()
    with pytest.raises(ConfigError):
        small_cfg(rvq_j_grid=(5,)).validate()  # 5 does not divide 64
    with pytest.raises(ConfigError):
        small_cfg(analog_beta=0.5).validate()
    with pytest.raises(ConfigError):
        small_cfg(schemes=("phys-tq",)).validate()  # needs path structure
    small_cfg(alpha_fb_grid=(0.0,)).validate()  # zero budget is legal


def test_apply_overrides():
    cfg = small_cfg()
    out = apply_overrides(cfg, seed=123, trials=7)
    assert out.master_seed == 123 and out.n_trials == 7
    same = apply_overrides(cfg)
    assert same.master_seed == cfg.master_seed


# ---------------------------------------------------------------------------
# CSV contract


def make_record(**kw):
    base = dict(
        scheme="tdq-limit", alpha_fb=4.0, snr_db=10.0, J=0, B_tot_bits=83.0,
        rate_lower_bits=3.5, rate_genie_upper_bits=float("nan"),
        analytic_gap_bits=0.9, rate_csit_bits=6.05, n_trials=0,
        stderr_bits=float("nan"), seed=99, status="",
    )
    base.update(kw)
    return SweepRecord(**base)


def test_emit_csv_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    text = path.read_text(encoding="utf-8")
    assert text.splitlines() == [
        "scheme,alpha_fb,snr_db,J,B_tot_bits,rate_lower_bits,"
        "rate_genie_upper_bits,analytic_gap_bits,rate_csit_bits,"
        "n_trials,stderr_bits,seed,status"
    ]


def test_emit_csv_roundtrip(tmp_path):
    records = [make_record(), make_record(scheme="rvq", J=8, status="rvq-bits-capped")]
    path = tmp_path / "two.csv"
    emit_csv(records, path)
    raw = path.read_bytes()
    assert b"\r" not in raw  # LF line endings on every platform
    assert raw.decode("utf-8")
    back = parse_csv(path)
    assert len(back) == 2
    for a, b in zip(records, back):
        for name in ("scheme", "alpha_fb", "snr_db", "J", "seed", "status"):
            assert getattr(a, name) == getattr(b, name)
        assert math.isnan(b.rate_genie_upper_bits)
        assert b.rate_lower_bits == a.rate_lower_bits


def test_emit_csv_stream_and_bytes():
    buf = io.StringIO()
    emit_csv([make_record()], buf)
    text = buf.getvalue()
    assert text.count("\n") == 2
    assert records_to_csv_bytes([make_record()]) == text.encode("utf-8")


def test_emit_csv_write_failure(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        emit_csv([make_record()], tmp_path / "no" / "dir" / "x.csv")


def test_parse_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        parse_csv(path)


def test_float_formatting_nine_significant_digits(tmp_path):
    rec = make_record(rate_lower_bits=3.141592653589793)
    path = tmp_path / "fmt.csv"
    emit_csv([rec], path)
    assert "3.14159265" in path.read_text()
    back = parse_csv(path)[0]
    assert abs(back.rate_lower_bits - rec.rate_lower_bits) < 1e-8


# ---------------------------------------------------------------------------
# sweeps


def test_bounds_mode_all_schemes():
    cfg = small_cfg(
        schemes=("analog", "rvq", "tdq-limit", "tdq-suq-rwf", "tdq-suq-greedy", "kl-suq"),
        alpha_fb_grid=(4.0, 8.0),
    )
    records = run_sweep(cfg, mode="bounds")
    assert len(records) == 12
    for rec in records:
        assert rec.n_trials == 0
        assert math.isnan(rec.rate_genie_upper_bits)
        assert math.isnan(rec.stderr_bits)
        if not rec.status:
            assert rec.analytic_gap_bits >= 0
            assert rec.rate_lower_bits <= rec.rate_csit_bits + 1e-9
    order = [(r.scheme, r.alpha_fb) for r in records]
    assert order == sorted(order, key=lambda t: (cfg.schemes.index(t[0]), t[1]))


def test_budget_accounting():
    cfg = small_cfg(schemes=("analog", "rvq", "tdq-limit"), alpha_fb_grid=(6.0,))
    by_scheme = {r.scheme: r for r in run_sweep(cfg, mode="bounds")}
    assert math.isnan(by_scheme["analog"].B_tot_bits)
    assert by_scheme["rvq"].B_tot_bits == budget_to_bits("rvq", 6.0, 10.0, 4)
    assert by_scheme["tdq-limit"].B_tot_bits == budget_to_bits("digital", 6.0, 10.0, 4)
    assert by_scheme["rvq"].J >= 1  # optimizer picked a cluster count
    # analog spends J beta channel uses: alpha = 6, beta = 1 affords J <= 4
    assert by_scheme["analog"].J == 4


def test_zero_budget_semantics():
    cfg = small_cfg(schemes=("tdq-limit", "analog"), alpha_fb_grid=(0.0,))
    recs = run_sweep(cfg, mode="bounds")
    tdq = next(r for r in recs if r.scheme == "tdq-limit")
    expect = math.log1p(0.75 * 10.0) / math.log(2.0)
    assert abs(tdq.analytic_gap_bits - expect) < 1e-9
    analog = next(r for r in recs if r.scheme == "analog")
    assert analog.status == "analog-infeasible"
    assert math.isnan(analog.rate_lower_bits)  # nothing was evaluated


def test_sweep_mode_consistency():
    cfg = small_cfg(schemes=("analog",), alpha_fb_grid=(8.0,), n_trials=30)
    rec = run_sweep(cfg, mode="sweep")[0]
    assert rec.n_trials == 30
    assert rec.rate_genie_upper_bits > 0
    # analytic lower bound never exceeds the genie beyond MC error
    assert rec.rate_lower_bits <= rec.rate_genie_upper_bits + 4 * rec.stderr_bits
    assert rec.rate_genie_upper_bits <= rec.rate_csit_bits + 4 * rec.stderr_bits


def test_simulate_mode_hides_analytic_gap():
    cfg = small_cfg(schemes=("rvq",), alpha_fb_grid=(6.0,), n_trials=25)
    rec = run_sweep(cfg, mode="simulate")[0]
    assert math.isnan(rec.analytic_gap_bits)
    assert rec.rate_lower_bits > 0
    assert rec.n_trials == 25


def test_sweep_determinism_and_jobs():
    cfg = small_cfg(schemes=("rvq", "tdq-suq-rwf"), alpha_fb_grid=(6.0,), n_trials=20)
    a = records_to_csv_bytes(run_sweep(cfg, mode="sweep", jobs=1))
    b = records_to_csv_bytes(run_sweep(cfg, mode="sweep", jobs=2))
    c = records_to_csv_bytes(run_sweep(cfg, mode="sweep", jobs=1))
    assert a == b == c


def test_sweep_seed_sensitivity():
    cfg = small_cfg(schemes=("rvq",), alpha_fb_grid=(6.0,), n_trials=15)
    a = run_sweep(cfg, mode="simulate")[0]
    b = run_sweep(apply_overrides(cfg, seed=6), mode="simulate")[0]
    assert a.rate_genie_upper_bits != b.rate_genie_upper_bits


def test_status_row_survives_sweep():
    cfg = small_cfg(
        schemes=("rvq",), alpha_fb_grid=(8.0,), rvq_j_grid=(1,), rvq_b_cap=2,
    )
    rec = run_sweep(cfg, mode="bounds")[0]
    assert rec.status == "rvq-bits-over-cap"


def test_sweep_log_lines():
    cfg = small_cfg(schemes=("tdq-limit",), alpha_fb_grid=(4.0,), n_trials=10)
    lines = []
    run_sweep(cfg, mode="sweep", log=lines.append)
    assert len(lines) == 1
    assert "tdq-limit alpha_fb=4 snr=10dB" in lines[0]


def test_run_sweep_rejects_bad_mode():
    with pytest.raises(ValueError):
        run_sweep(small_cfg(), mode="estimate")


# ---------------------------------------------------------------------------
# command line


def test_cli_bounds_to_file(tmp_path, capsys):
    ini = write_ini(tmp_path, SMALL_INI)
    out = str(tmp_path / "out.csv")
    assert main(["bounds", "--config", ini, "--out", out]) == 0
    records = parse_csv(out)
    assert len(records) == 8
    assert all(r.n_trials == 0 for r in records)


def test_cli_stdout_and_stderr_split(tmp_path, capsys):
    ini = write_ini(
        tmp_path,
        SMALL_INI.replace("n_trials = 40", "n_trials = 8").replace(
            "schemes = analog, rvq, tdq-limit, tdq-suq-rwf", "schemes = tdq-limit"
        ),
    )
    assert main(["sweep", "--config", ini]) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith("scheme,")
    assert "tdq-limit alpha_fb=4" in captured.err


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = write_ini(tmp_path, SMALL_INI.replace("[run]\n", "[run]\nk_users = 3\n"))
    assert main(["bounds", "--config", bad]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_missing_config_exit_code(tmp_path, capsys):
    assert main(["bounds", "--config", str(tmp_path / "nope.ini")]) == 2


def test_cli_strict_flags_status_rows(tmp_path, capsys):
    ini = write_ini(
        tmp_path,
        """\
[run]
preset = paper-dip5
snr_db = 10
alpha_fb = 8
schemes = rvq
n_trials = 5

[scheme.rvq]
j_grid = 1
b_cap = 2
""",
    )
    assert main(["bounds", "--config", ini]) == 0
    assert main(["bounds", "--config", ini, "--strict"]) == 3


def test_cli_seed_and_trials_overrides(tmp_path, capsys):
    ini = write_ini(
        tmp_path,
        SMALL_INI.replace(
            "schemes = analog, rvq, tdq-limit, tdq-suq-rwf", "schemes = rvq"
        ).replace("alpha_fb = 4, 8", "alpha_fb = 6"),
    )
    out1 = str(tmp_path / "a.csv")
    out2 = str(tmp_path / "b.csv")
    assert main(["simulate", "--config", ini, "--out", out1, "--trials", "9", "--seed", "3"]) == 0
    assert main(["simulate", "--config", ini, "--out", out2, "--trials", "9", "--seed", "4"]) == 0
    a, b = parse_csv(out1)[0], parse_csv(out2)[0]
    assert a.n_trials == 9 and a.seed == 3 and b.seed == 4
    assert a.rate_genie_upper_bits != b.rate_genie_upper_bits


def test_cli_plot_writes_figures(tmp_path, capsys):
    ini = write_ini(
        tmp_path,
        SMALL_INI.replace("n_trials = 40", "n_trials = 6").replace(
            "schemes = analog, rvq, tdq-limit, tdq-suq-rwf", "schemes = tdq-limit"
        ),
    )
    plot_dir = tmp_path / "figs"
    out = str(tmp_path / "o.csv")
    assert main(["bounds", "--config", ini, "--out", out, "--plot", str(plot_dir)]) == 0
    pngs = list(plot_dir.glob("*.png"))
    assert len(pngs) == 1
    assert "sum_rate_vs_alpha" in pngs[0].name


def test_cli_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "paper-dip5" in out and "sui4-omni" in out


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_cli_bad_jobs(tmp_path, capsys):
    ini = write_ini(tmp_path, SMALL_INI)
    assert main(["bounds", "--config", ini, "--jobs", "0"]) == 2
