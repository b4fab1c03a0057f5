"""Figures for the report stages: ROC curves, the ablation grid and explanation bars."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

POSITIVE_COLOR = "#2ca02c"
NEGATIVE_COLOR = "#d62728"
# Fixed metadata keeps PNG bytes identical across runs.
_PNG_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_roc(curves: Mapping[str, tuple[Sequence[tuple[float, float]], float]], path, title: str = "ROC") -> Path:
    """One line per model; ``curves[name] = (roc_points, auc)``."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for name, (points, auc) in curves.items():
        pts = np.asarray(points)
        ax.plot(pts[:, 0], pts[:, 1], label=f"{name} (AUC = {auc:.3f})")
    ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.01)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def plot_ablation(table: pd.DataFrame, path, title: str = "AUC by feature set") -> Path:
    """Grouped bars, one group per ablation row and one bar per model kind."""
    fig, ax = plt.subplots(figsize=(8, 4))
    n_rows, n_kinds = table.shape
    width = 0.8 / n_kinds
    x = np.arange(n_rows)
    for i, kind in enumerate(table.columns):
        ax.bar(x + (i - (n_kinds - 1) / 2) * width, table[kind].to_numpy(), width, label=kind)
    ax.axhline(0.5, color="grey", linestyle="--", linewidth=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(table.index)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("AUC")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_explanation(pairs: Sequence[tuple[str, float]], path, title: str = "Local explanation") -> Path:
    """Horizontal bars, largest weight on top; green pushes toward the positive class."""
    fig, ax = plt.subplots(figsize=(7, 0.4 * max(len(pairs), 1) + 1))
    if pairs:
        names = [n for n, _ in pairs][::-1]
        weights = np.array([w for _, w in pairs][::-1])
        ax.barh(names, weights, color=np.where(weights >= 0, POSITIVE_COLOR, NEGATIVE_COLOR))
        ax.axvline(0, color="black", linewidth=0.8)
    else:
        ax.text(0.5, 0.5, "no salient features", ha="center", va="center", transform=ax.transAxes)
        ax.set_yticks([])
    ax.set_xlabel("weight toward positive class")
    ax.set_title(title)
    return _save(fig, path)
