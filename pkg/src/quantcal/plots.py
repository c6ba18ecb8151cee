"""Figure rendering for report outputs (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_matrix_report(rows: list[dict], path: str | Path) -> Path:
    """Grouped bar chart of accuracy drop per (calibration dataset, mode)."""
    datasets = sorted({r["dataset"] for r in rows})
    modes = sorted({r["mode"] for r in rows})
    width = 0.8 / max(len(modes), 1)
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(datasets), 3.6))
    for j, mode in enumerate(modes):
        drops = []
        for ds in datasets:
            match = [r for r in rows if r["dataset"] == ds and r["mode"] == mode]
            drops.append(match[0]["drop_pp"] if match else 0.0)
        xs = [i + (j - (len(modes) - 1) / 2) * width for i in range(len(datasets))]
        ax.bar(xs, drops, width=width, label=mode)
    ax.set_xticks(range(len(datasets)))
    ax.set_xticklabels(datasets, rotation=15, ha="right")
    ax.set_ylabel("accuracy drop (pp)")
    ax.set_title("Quantization accuracy drop by calibration dataset")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_quantize_report(report: dict, path: str | Path) -> Path:
    """Two panels: drop trajectory over revert iterations, and the per-layer
    channel |w|max spread with reverted layers highlighted."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))

    history = report.get("history") or []
    drops = [h["drop_pp"] for h in history]
    ax1.plot(range(len(drops)), drops, marker="o")
    ax1.set_xlabel("revert iteration")
    ax1.set_ylabel("accuracy drop (pp)")
    ax1.set_title("Accuracy drop vs reverts")
    if len(drops) > 0:
        ax1.set_xticks(range(len(drops)))

    ranges = report.get("layer_weight_ranges") or {}
    reverted = set(report.get("reverted_layers") or [])
    names = list(ranges)
    ratios = [ranges[n]["channel_absmax_ratio"] or 0.0 for n in names]
    colors = ["tab:red" if n in reverted else "tab:blue" for n in names]
    ax2.bar(range(len(names)), ratios, color=colors)
    ax2.set_xticks(range(len(names)))
    ax2.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax2.set_ylabel("channel |w|max spread (ratio)")
    ax2.set_title("Per-layer weight spread (red = reverted)")

    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
