"""Figure rendering for the report commands.

Every figure is written next to the CSV holding its data, with the same
stem and a ``.png`` suffix.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
}


def new_figure(width: float = 6.0, height: float | None = None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(width, height or width * GOLDEN))
    return fig, ax


def save(fig, path) -> Path:
    path = Path(path).with_suffix(".png")
    with plt.rc_context(RC):
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def energy_comparison(rows, path):
    """Grouped bars: one group per profile, one bar per metric (log scale)."""
    profiles = list(dict.fromkeys(r["profile"] for r in rows))
    metrics = list(dict.fromkeys(r["metric"] for r in rows))
    fig, ax = new_figure(7.0)
    width = 0.8 / max(len(metrics), 1)
    for j, metric in enumerate(metrics):
        xs, ys = [], []
        for i, prof in enumerate(profiles):
            for r in rows:
                if r["profile"] == prof and r["metric"] == metric:
                    xs.append(i + (j - (len(metrics) - 1) / 2) * width)
                    ys.append(r["total_j"])
        ax.bar(xs, ys, width=width, label=metric)
    ax.set_xticks(range(len(profiles)))
    ax.set_xticklabels(profiles, rotation=30, ha="right")
    ax.set_yscale("log")
    ax.set_ylabel("energy per inference [J]")
    ax.legend()
    return save(fig, path)


def layer_breakdown(estimate, path):
    blocks = estimate.block_totals()
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7.0, 5.5))
    top.bar(range(len(blocks)), list(blocks.values()))
    top.set_xticks(range(len(blocks)))
    top.set_xticklabels(list(blocks), rotation=45, ha="right")
    top.set_ylabel("block energy [J]")
    bottom.plot([e.energy_j for e in estimate.per_layer], marker=".", lw=0.8)
    bottom.set_xlabel("layer index")
    bottom.set_ylabel("layer energy [J]")
    fig.suptitle(f"computation energy per inference ({estimate.metric_used})")
    return save(fig, path)


def breakeven(report, path):
    rows = report.rows()
    n = [r[0] for r in rows]
    fig, ax = new_figure()
    ax.loglog(n, [r[1] for r in rows], marker="o", label="amortized training J/inference")
    ax.loglog(n, [r[2] for r in rows], marker="s", label="cumulative inference J")
    ax.axvline(report.n_star, color="k", ls="--", lw=0.8, label=f"n* = {report.n_star:.3g}")
    ax.set_xlabel("inferences")
    ax.set_ylabel("energy [J]")
    ax.legend()
    return save(fig, path)


def sweep_summary(summary, path, xlabel: str, log_x: bool = False):
    xs = [r["flops"] if xlabel.startswith("FLOPs") else r["grid_value"] for r in summary]
    med = [r["median_gm_ber"] for r in summary]
    lo = [r["min_gm_ber"] for r in summary]
    hi = [r["max_gm_ber"] for r in summary]
    fig, ax = new_figure()
    ok = [i for i, m in enumerate(med) if m is not None]
    ax.plot([xs[i] for i in ok], [med[i] for i in ok], marker="o", label="median")
    ax.fill_between([xs[i] for i in ok], [lo[i] for i in ok], [hi[i] for i in ok],
                    alpha=0.25, label="min-max over seeds")
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("mean log10 BER (lower is better)")
    ax.legend()
    return save(fig, path)


def ber_curves(curves, path):
    fig, ax = new_figure()
    for curve in curves:
        ax.semilogy([p.sinr_db for p in curve.points], [p.ber for p in curve.points],
                    marker="o", label=f"{curve.model_label} ({curve.gm_ber:.3f})")
    ax.set_xlabel("SINR [dB]")
    ax.set_ylabel("BER")
    ax.legend()
    return save(fig, path)
