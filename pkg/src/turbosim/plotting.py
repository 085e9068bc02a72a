"""SVG figures rendered from the CSV outputs.

Every function here reads numbers only from CSV files, never from live
results, so a figure can be regenerated from an archived run directory.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import read_ber_csv, read_csv  # noqa: E402

__all__ = ["render_ber_svg", "render_compare_svg", "render_capacity_svg"]

_RC = {
    "svg.hashsalt": "turbosim",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.grid": True,
    "grid.linestyle": ":",
    "grid.linewidth": 0.5,
    "legend.fontsize": 8,
}


def _save(fig, svg_path) -> Path:
    p = Path(svg_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(p, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return p


def render_ber_svg(csv_path, svg_path, asymptote_csv=None, min_bit_errors: int = 1) -> Path:
    """BER vs SNR, one marker series per curve, optional dashed asymptote lines.

    Points with fewer than ``min_bit_errors`` errors are not drawn.
    """
    curves = read_ber_csv(csv_path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        markers = "osd^v<>ph*"
        for i, (key, pts) in enumerate(curves.items()):
            pts = [p for p in pts if p.bit_errors >= min_bit_errors]
            if not pts:
                continue
            ax.semilogy([p.snr_db for p in pts], [p.ber for p in pts],
                        marker=markers[i % len(markers)], linestyle="-", linewidth=0.8,
                        markersize=4, label=key.label())
        if asymptote_csv is not None:
            rows = read_csv(asymptote_csv)
            groups: dict[tuple, list] = {}
            for r in rows:
                groups.setdefault((r["alpha"], r["beta"], r["N"]), []).append(r)
            for (a, b, n), rs in groups.items():
                ax.semilogy([float(r["snr_db"]) for r in rs], [float(r["ber_asymptote"]) for r in rs],
                            linestyle="--", color="k", linewidth=0.7,
                            label=f"asymptote N={n} (alpha={float(a):g}, beta={float(b):g})")
            lo = min(p.ber for pts in curves.values() for p in pts if p.ber > 0)
            ax.set_ylim(bottom=lo / 10)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("BER")
        ax.legend(loc="lower left")
        return _save(fig, svg_path)


def render_compare_svg(csv_path, svg_path) -> Path:
    """Bits per channel use at the FEC limit for each scheme column."""
    rows = read_csv(csv_path)
    snr = [float(r["snr_db"]) for r in rows]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        for col in rows[0].keys() if rows else ():
            if col == "snr_db":
                continue
            vals = [float(r[col]) for r in rows]
            style = "--" if col == "capacity" else "-"
            ax.plot(snr, vals, style, drawstyle="default" if col == "capacity" else "steps-post",
                    label=col)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("bits per channel use")
        ax.legend(loc="upper left")
        return _save(fig, svg_path)


def render_capacity_svg(csv_path, svg_path) -> Path:
    rows = read_csv(csv_path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        ax.plot([float(r["snr_db"]) for r in rows], [float(r["capacity"]) for r in rows], "o-",
                markersize=3)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("ergodic capacity (bits per channel use)")
        return _save(fig, svg_path)
