"""Figures written next to the text reports (Agg backend, files only)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import Category, StratReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    # fixed metadata keeps repeated renders byte-identical
    "svg.hashsalt": "binalign",
}

LABELS = {
    Category.UNTRANSLATED: "untranslated",
    Category.ONE_TO_MANY: "one-to-many",
    Category.ONE_TO_MANY_NONCONTIGUOUS: "non-contiguous",
}


def _save(fig, path):
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    fmt = os.path.splitext(path)[1].lstrip(".") or "png"
    meta = {"Software": None} if fmt == "png" else {"Date": None}
    fig.savefig(tmp, format=fmt, metadata=meta, bbox_inches="tight")
    plt.close(fig)
    os.replace(tmp, path)
    return path


def plot_stratification(report: StratReport, path):
    """Bar chart of percent-correct per error category, occurrences annotated."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        cats = list(Category)
        pct = [report[c].percent for c in cats]
        bars = ax.bar([LABELS[c] for c in cats], pct, color=["#4c72b0", "#55a868", "#c44e52"])
        for bar, c in zip(bars, cats):
            s = report[c]
            ax.annotate(
                f"{s.correct}/{s.occurrences}",
                (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                ha="center",
                va="bottom",
                fontsize=8,
            )
        ax.set_ylim(0, 105)
        ax.set_ylabel("correctly aligned words (%)")
        return _save(fig, path)


def plot_score_matrix(probs, src_words, tgt_words, path, links=None, title=None):
    """Heatmap of word-level alignment probabilities with ``links`` outlined."""
    probs = np.asarray(probs)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(0.45 * len(tgt_words) + 1.8, 0.45 * len(src_words) + 1.2))
        im = ax.imshow(probs, vmin=0.0, vmax=1.0, cmap="Blues", aspect="equal")
        ax.set_xticks(range(len(tgt_words)), tgt_words, rotation=60, ha="right")
        ax.set_yticks(range(len(src_words)), src_words)
        for i, j in sorted(links or ()):
            ax.add_patch(plt.Rectangle((j - 0.5, i - 0.5), 1, 1, fill=False, ec="#c44e52", lw=1.5))
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_training_curve(history, path):
    """Per-epoch mean loss, with validation AER on a twin axis when present."""
    epochs = [r["epoch"] for r in history]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(epochs, [r["mean_loss"] for r in history], "o-", color="#4c72b0", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean BCE")
        if any("val_aer" in r for r in history):
            ax2 = ax.twinx()
            ax2.plot(
                [r["epoch"] for r in history if "val_aer" in r],
                [r["val_aer"] for r in history if "val_aer" in r],
                "s--",
                color="#c44e52",
            )
            ax2.set_ylabel("validation AER")
        return _save(fig, path)
