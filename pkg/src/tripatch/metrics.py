"""Detection quality metrics: precision/recall/F1, ROC-AUC, point adjustment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ShapeError, UndefinedMetricError


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass
class F1Result:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    degenerate: bool = field(default=False)  # a zero denominator forced the 0 convention


def _aligned_bool(a, b, name_a: str, name_b: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"{name_a} and {name_b} must be 1-D")
    if a.shape != b.shape:
        raise ShapeError(f"{name_a} length {a.shape[0]} != {name_b} length {b.shape[0]}")
    return a, b


def f1_score(predictions, labels) -> F1Result:
    """Confusion-matrix precision/recall/F1; zero denominators yield 0, flagged."""
    predictions, labels = _aligned_bool(predictions, labels, "predictions", "labels")
    pred = predictions.astype(bool)
    lab = labels.astype(bool)
    tp = int(np.sum(pred & lab))
    fp = int(np.sum(pred & ~lab))
    tn = int(np.sum(~pred & ~lab))
    fn = int(np.sum(~pred & lab))

    degenerate = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, degenerate = 0.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    return F1Result(
        precision=precision,
        recall=recall,
        f1=f1,
        counts=ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn),
        degenerate=degenerate,
    )


def roc_auc(scores, labels) -> float:
    """Mann-Whitney ROC-AUC: P(random positive outranks random negative), ties half.

    Computed from midranks, which matches the brute-force pairwise count exactly.
    """
    scores, labels = _aligned_bool(scores, labels, "scores", "labels")
    scores = scores.astype(np.float64)
    lab = labels.astype(bool)
    n_pos = int(lab.sum())
    n_neg = lab.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC-AUC needs both classes, got {n_pos} positives / {n_neg} negatives"
        )
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[lab].sum())
    u_stat = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u_stat / (n_pos * n_neg)


def point_adjust(predictions, labels) -> np.ndarray:
    """Benchmark convention: a single hit inside a labeled anomaly segment
    credits the whole segment. Never flips a positive prediction off."""
    predictions, labels = _aligned_bool(predictions, labels, "predictions", "labels")
    adjusted = predictions.astype(bool).copy()
    lab = labels.astype(bool)
    n = lab.size
    t = 0
    while t < n:
        if lab[t]:
            end = t
            while end < n and lab[end]:
                end += 1
            if adjusted[t:end].any():
                adjusted[t:end] = True
            t = end
        else:
            t += 1
    return adjusted


