"""Report figures: precision/recall curves rendered to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import PRCurve  # noqa: E402


def _envelope(precision: Sequence[float]) -> list[float]:
    out = list(precision)
    for i in range(len(out) - 2, -1, -1):
        out[i] = max(out[i], out[i + 1])
    return out


def plot_pr_curve(curve: PRCurve, path, title: str | None = None, dpi: int = 100) -> Path:
    """Write one class's raw and enveloped PR curve; returns the output path."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 4))
    try:
        if curve.recall:
            recall = [0.0] + list(curve.recall)
            raw = [curve.precision[0]] + list(curve.precision)
            ax.plot(recall, raw, color="0.6", lw=1, label="precision")
            ax.step(recall, _envelope(raw), where="post", color="C0", lw=1.5, label="envelope")
            ax.legend(loc="lower left", frameon=False)
        ax.set_xlim(0, 1.0)
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_title(title or f"{curve.label}  AP = {curve.ap:.4f}")
        fig.tight_layout()
        fig.savefig(path, dpi=dpi)
    finally:
        plt.close(fig)
    return path


def plot_ap_summary(aps: dict[str, float], mean_ap: float, path, dpi: int = 100) -> Path:
    """Bar chart of per-class AP with the mAP drawn as a horizontal line."""
    path = Path(path)
    labels = list(aps)
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(labels) + 2), 4))
    try:
        ax.bar(range(len(labels)), [aps[k] for k in labels], color="C0")
        ax.axhline(mean_ap, color="C3", ls="--", lw=1, label=f"mAP = {mean_ap:.4f}")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("AP")
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        fig.savefig(path, dpi=dpi)
    finally:
        plt.close(fig)
    return path
