"""Figure rendering for CLI reports. Every helper writes one PNG file."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402


def save_heatmap(grid: np.ndarray, path: str | Path, tokens: list[str] | None = None,
                 title: str = "") -> None:
    """Render a 2D grid as an annotated heatmap image."""
    grid = np.asarray(grid, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(max(4, grid.shape[1] * 0.5),
                                    max(4, grid.shape[0] * 0.5)))
    im = ax.imshow(grid, cmap="viridis", interpolation="nearest")
    if tokens is not None:
        ax.set_xticks(range(len(tokens)), tokens, rotation=90, fontsize=7)
        ax.set_yticks(range(len(tokens)), tokens, fontsize=7)
    ax.set_xlabel("object token")
    ax.set_ylabel("subject token")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_curves(history: list[dict], path: str | Path) -> None:
    """Loss and train/dev F1 per epoch, two stacked panels."""
    epochs = [row["epoch"] for row in history]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(epochs, [row["loss"] for row in history], color="tab:red")
    ax1.set_ylabel("loss")
    ax1.grid(True, alpha=0.3)
    ax2.plot(epochs, [row["train_f1"] for row in history], label="train F1")
    ax2.plot(epochs, [row["dev_f1"] for row in history], label="dev F1")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("partial F1")
    ax2.set_ylim(-0.02, 1.02)
    ax2.grid(True, alpha=0.3)
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_eval_bars(report: EvalReport, path: str | Path) -> None:
    """F1 per overlap pattern and per triple-count bucket."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for ax, split in ((ax1, report.patterns), (ax2, report.buckets)):
        names = list(split)
        scores = [split[n].scores()[2] for n in names]
        support = [split[n].tp + split[n].fn for n in names]
        bars = ax.bar(names, scores, color="tab:blue")
        for bar, sup in zip(bars, support):
            ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.01,
                    str(sup), ha="center", fontsize=8)
        ax.set_ylim(0, 1.1)
        ax.grid(True, axis="y", alpha=0.3)
    ax1.set_title(f"{report.mode} F1 by overlap pattern")
    ax2.set_title(f"{report.mode} F1 by triples per sentence")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_stats_bars(stats, path: str | Path, title: str = "") -> None:
    """Sentence counts by overlap pattern and by triple-count bucket."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    pat_names = ["Normal", "EPO", "SEO", "SOO"]
    pat_counts = [stats.normal, stats.epo, stats.seo, stats.soo]
    ax1.bar(pat_names, pat_counts, color="tab:green")
    ax1.set_title("sentences by overlap pattern")
    bucket_names = list(stats.buckets)
    ax2.bar(bucket_names, [stats.buckets[k] for k in bucket_names], color="tab:orange")
    ax2.set_title("sentences by triple count")
    for ax in (ax1, ax2):
        ax.grid(True, axis="y", alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_timing_bars(rows, path: str | Path) -> None:
    """Seconds per epoch for each local-stack variant."""
    fig, ax = plt.subplots(figsize=(8, 4))
    names = ["+".join(r.stack) for r in rows]
    ax.bar(range(len(rows)), [r.seconds_per_epoch for r in rows], color="tab:purple")
    ax.set_xticks(range(len(rows)), names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("seconds per epoch")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
