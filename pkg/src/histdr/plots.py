"""PNG figures for the analysis reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {"figure.dpi": 120, "axes.spines.top": False, "axes.spines.right": False,
          "axes.grid": True, "grid.alpha": 0.3, "font.size": 9}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_prj_portion(curves: Mapping[str, Sequence[Tuple[int, float]]], path) -> Path:
    """One line per split: share of historical turns judged relevant vs turn index."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for label, pts in curves.items():
            xs = [n for n, _ in pts]
            ax.plot(xs, [100 * p for _, p in pts], marker="o", ms=3, label=label)
        ax.set_xlabel("current turn")
        ax.set_ylabel("relevant history (%)")
        ax.set_ylim(0, 100)
        if len(curves) > 1:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_hist_above(percentages: Mapping[str, float], path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(percentages), 3.2))
        labels = list(percentages)
        bars = ax.bar(labels, [percentages[k] for k in labels], color="#4c72b0")
        ax.bar_label(bars, fmt="%.1f", fontsize=8)
        ax.set_ylabel("queries with history above gold (%)")
        ax.set_ylim(0, 100)
        ax.tick_params(axis="x", rotation=20)
        return _save(fig, path)


def plot_ablation(medians: Mapping[str, Mapping[str, float]], metrics: Sequence[str], path) -> Path:
    """Grouped bars: one group per metric, one bar per variant."""
    variants = list(medians)
    width = 0.8 / max(1, len(variants))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(1.5 + 1.3 * len(metrics), 3.2))
        for j, v in enumerate(variants):
            xs = [i + (j - (len(variants) - 1) / 2) * width for i in range(len(metrics))]
            ax.bar(xs, [medians[v][m] for m in metrics], width, label=v)
        ax.set_xticks(range(len(metrics)), metrics)
        ax.set_ylabel("median over seeds")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def plot_train_loss(steps: Sequence[int], losses: Sequence[float], path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(steps, losses, lw=1)
        ax.set_xlabel("step")
        ax.set_ylabel("batch loss")
        return _save(fig, path)
