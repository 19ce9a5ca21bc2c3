"""Figure writers for run outputs.

Every function renders one PNG to the given path and returns that path.
The Agg backend is forced so rendering works headless; figures are closed
after saving to keep long sweeps from accumulating state.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ShapeError


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def _label_segments(labels: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous True runs as [start, end) pairs."""
    padded = np.concatenate(([False], labels, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[0::2], edges[1::2]))


def save_score_timeline(
    path: str | Path,
    scores: np.ndarray,
    threshold: float | None = None,
    labels: np.ndarray | None = None,
    predictions: np.ndarray | None = None,
) -> Path:
    """Anomaly scores over time with the threshold, labeled spans, and hits."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ShapeError(f"scores must be 1-D, got shape {scores.shape}")
    fig, ax = plt.subplots(figsize=(12, 4))
    t = np.arange(scores.shape[0])
    if labels is not None:
        labels = np.asarray(labels, dtype=bool)
        if labels.shape != scores.shape:
            raise ShapeError("labels must align with scores")
        for start, end in _label_segments(labels):
            ax.axvspan(start, end, color="tab:red", alpha=0.15, linewidth=0)
    ax.plot(t, scores, color="tab:blue", linewidth=0.7, label="score")
    if threshold is not None:
        ax.axhline(threshold, color="tab:orange", linestyle="--", label="threshold")
    if predictions is not None:
        predictions = np.asarray(predictions, dtype=bool)
        if predictions.shape != scores.shape:
            raise ShapeError("predictions must align with scores")
        hits = np.flatnonzero(predictions)
        if hits.size:
            ax.plot(hits, scores[hits], ".", color="tab:red", markersize=2, label="detected")
    ax.set_xlabel("timestamp")
    ax.set_ylabel("anomaly score")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("Per-timestamp anomaly score")
    return _finish(fig, path)


def save_loss_curves(path: str | Path, curves: dict[str, list[float]]) -> Path:
    """One line per named training stage, epoch index on the x axis."""
    if not curves or all(len(v) == 0 for v in curves.values()):
        raise ShapeError("need at least one non-empty loss curve")
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, values in curves.items():
        if values:
            ax.plot(range(1, len(values) + 1), values, marker="o", label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.legend(fontsize=8)
    ax.set_title("Training loss")
    return _finish(fig, path)


def save_ablation_bars(path: str | Path, rows: list[dict]) -> Path:
    """Side-by-side F1/AUC bars per pipeline variant.

    Rows carry 'variant', 'f1' and optionally 'auc' (None allowed).
    """
    if not rows:
        raise ShapeError("need at least one ablation row")
    variants = [str(r["variant"]) for r in rows]
    f1s = [float(r["f1"]) for r in rows]
    aucs = [r.get("auc") for r in rows]
    x = np.arange(len(variants))
    width = 0.35
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - width / 2, f1s, width, label="F1", color="tab:blue")
    if any(a is not None for a in aucs):
        ax.bar(
            x + width / 2,
            [0.0 if a is None else float(a) for a in aucs],
            width,
            label="AUC",
            color="tab:green",
        )
    ax.set_xticks(x)
    ax.set_xticklabels(variants, rotation=15, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("metric value")
    ax.legend(fontsize=8)
    ax.set_title("Pipeline variants")
    return _finish(fig, path)


def save_sweep_curve(path: str | Path, n_values: list[int], rows: list[dict]) -> Path:
    """Negative-sample count against F1 (and AUC when present)."""
    if len(n_values) != len(rows) or not rows:
        raise ShapeError("one result row per swept value required")
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(n_values, [float(r["f1"]) for r in rows], marker="o", label="F1")
    aucs = [r.get("auc") for r in rows]
    if all(a is not None for a in aucs):
        ax.plot(n_values, [float(a) for a in aucs], marker="s", label="AUC")
    ax.set_xlabel("negative samples per anchor")
    ax.set_ylabel("metric value")
    ax.set_ylim(0.0, 1.05)
    ax.set_xticks(n_values)
    ax.legend(fontsize=8)
    ax.set_title("Effect of the negative-sample count")
    return _finish(fig, path)
