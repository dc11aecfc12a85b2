"""Figure rendering for sweep records.

One figure per downlink SNR: achievable sum-rate lower bounds (solid) and
genie-aided upper bounds (dashed) against the feedback load alpha_fb, one
color per scheme, with the perfect-CSIT sum rate as a reference line.
Figures are written next to the delimited output, never shown.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_figures"]

_COLORS = {
    "analog": "tab:blue",
    "rvq": "tab:orange",
    "tdq-limit": "tab:green",
    "tdq-suq-rwf": "tab:red",
    "tdq-suq-greedy": "tab:purple",
    "kl-suq": "tab:brown",
    "phys-tq": "tab:pink",
}


def _series(records, scheme, attr):
    pts = [
        (r.alpha_fb, getattr(r, attr))
        for r in records
        if r.scheme == scheme and not math.isnan(getattr(r, attr))
    ]
    pts.sort()
    return [p[0] for p in pts], [p[1] for p in pts]


def render_figures(records, outdir) -> list[Path]:
    """Render one sum-rate-vs-alpha figure per SNR; returns written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for snr_db in sorted({r.snr_db for r in records}):
        rows = [r for r in records if r.snr_db == snr_db]
        fig, ax = plt.subplots(figsize=(7.0, 4.6))
        for scheme in dict.fromkeys(r.scheme for r in rows):
            color = _COLORS.get(scheme, "tab:gray")
            x, y = _series(rows, scheme, "rate_lower_bits")
            if x:
                ax.plot(x, y, color=color, marker="o", markersize=3.5, label=scheme)
            x, y = _series(rows, scheme, "rate_genie_upper_bits")
            if x:
                ax.plot(x, y, color=color, linestyle="--", alpha=0.7)
        csit = [r.rate_csit_bits for r in rows if not math.isnan(r.rate_csit_bits)]
        if csit:
            ax.axhline(csit[0], color="black", linewidth=0.9, linestyle=":",
                       label="perfect CSIT")
        ax.set_xlabel("feedback load  alpha_fb  (uplink symbols per coefficient slot)")
        ax.set_ylabel("sum rate  (bits / channel use)")
        ax.set_title(f"ZF sum rate vs feedback load, SNR {snr_db:g} dB")
        ax.grid(True, alpha=0.3)
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        path = outdir / f"sum_rate_vs_alpha_snr{snr_db:g}dB.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
