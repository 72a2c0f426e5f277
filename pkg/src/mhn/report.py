"""Figure rendering for the CLI report paths.

Every command that writes delimited output can drop a small set of PNG
figures next to it: training loss curves, ROC/PR curves for link
prediction, and the probe F1 bars. Rendering is byte-deterministic (Agg
backend, fixed dpi, no timestamps in metadata).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evalkit import RankedPredictions, _pr_points  # noqa: E402

_DPI = 120


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_history_figure(history: list[tuple[int, float, float]],
                        path: str | Path) -> Path:
    """Train/validation loss curves from fit history rows."""
    epochs = [row[0] for row in history]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(epochs, [row[1] for row in history], label="train", marker="o", ms=3)
    ax.plot(epochs, [row[2] for row in history], label="validation", marker="s", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, Path(path))


def _roc_points(preds: RankedPredictions) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-preds.scores, kind="mergesort")
    labels = preds.labels[order]
    scores = preds.scores[order]
    tp = np.cumsum(labels)
    fp = np.cumsum(1 - labels)
    last = np.nonzero(np.diff(scores, append=np.nan))[0]
    tpr = np.concatenate(([0.0], tp[last] / max(int(preds.labels.sum()), 1)))
    fpr = np.concatenate(([0.0], fp[last] / max(int((1 - preds.labels).sum()), 1)))
    return fpr, tpr


def save_linkpred_figures(preds: RankedPredictions, out_dir: str | Path) -> list[Path]:
    """ROC and PR curve figures; returns the written paths."""
    out_dir = Path(out_dir)
    written = []

    fpr, tpr = _roc_points(preds)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(fpr, tpr)
    ax.plot([0, 1], [0, 1], ls="--", color="gray", lw=1)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("ROC")
    fig.tight_layout()
    written.append(_save(fig, out_dir / "roc_curve.png"))

    recall, precision = _pr_points(preds)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(np.concatenate(([0.0], recall)),
            np.concatenate(([precision[0]], precision)))
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_ylim(0, 1.05)
    ax.set_title("precision-recall")
    fig.tight_layout()
    written.append(_save(fig, out_dir / "pr_curve.png"))
    return written


def save_probe_figure(micro: float, macro: float, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(3.5, 3.5))
    ax.bar(["micro-F1", "macro-F1"], [micro, macro], color=["#4878cf", "#6acc64"])
    ax.set_ylim(0, 1.05)
    for i, v in enumerate([micro, macro]):
        ax.text(i, v + 0.02, f"{v:.3f}", ha="center")
    ax.set_ylabel("F1")
    fig.tight_layout()
    return _save(fig, Path(path))
