"""Reconstruction head, anomaly scoring, and threshold policies.

Each token's hidden state is mapped back to its patch's values by a linear
head. A timestamp's anomaly score is the mean over features of the squared
reconstruction error at that timestamp; thresholds come from a quantile of
training scores or a labeled-validation F1 scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .backbone import BackboneConfig, forward
from .embedding import EmbeddingConfig, compose_token_embeddings
from .errors import ContractError, ParameterError, ShapeError
from .metrics import f1_score
from .params import ParameterStore
from .tokenizer import Order, TokenSeries


@dataclass
class AnomalyScores:
    """Non-negative per-timestamp scores for one window."""

    scores: np.ndarray
    start_time: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1:
            raise ShapeError(f"scores must be 1-D, got {self.scores.shape}")
        if not np.all(np.isfinite(self.scores)) or np.any(self.scores < 0):
            raise ContractError("scores must be finite and non-negative")


@dataclass
class ThresholdPolicy:
    """Either 'quantile' with q in (0, 1), or 'best_f1' over a labeled validation."""

    kind: str
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ("quantile", "best_f1"):
            raise ParameterError(f"unknown threshold policy '{self.kind}'")
        if self.kind == "quantile":
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ParameterError(f"quantile policy needs q in (0, 1), got {self.q}")
        elif self.q is not None:
            raise ParameterError("best_f1 policy takes no quantile")


def add_reconstruction_head(
    store: ParameterStore, d_model: int, patch_len: int, seed: int
) -> ParameterStore:
    """Append head.weight / head.bias to an existing model store."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    store.add(
        "head.weight",
        Tensor(rng.normal(scale=np.sqrt(1.0 / d_model), size=(d_model, patch_len))),
    )
    store.add("head.bias", Tensor(np.zeros(patch_len)))
    return store


def reconstruct(hidden: Tensor, params: ParameterStore) -> Tensor:
    """(S, d_model) hidden states -> (S, L_patch) predicted patch values."""
    weight = params.get("head.weight")
    if hidden.ndim != 2 or hidden.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"hidden states {hidden.shape} do not match head input {weight.shape[0]}"
        )
    return ad.add(ad.matmul(hidden, weight), params.get("head.bias"))


def _targets_time_major(series: TokenSeries) -> np.ndarray:
    """Patch values stacked in time-major row order (the model's output order)."""
    m, p = series.n_features, series.patches_per_feature
    rows = []
    for i in range(1, p + 1):
        for j in range(1, m + 1):
            rows.append(series.patches[(j - 1) * p + (i - 1)].values)
    return np.stack(rows)


def reconstruction_loss(
    series: TokenSeries,
    params: ParameterStore,
    embed_cfg: EmbeddingConfig,
    backbone_cfg: BackboneConfig,
    feature_reprs: np.ndarray | None = None,
) -> Tensor:
    """Mean squared error between reconstructed and actual patch values."""
    seq = compose_token_embeddings(series, params, embed_cfg, feature_reprs=feature_reprs)
    hidden = forward(seq.vectors, params, backbone_cfg)
    predicted = reconstruct(hidden, params)
    diff = ad.sub(predicted, Tensor(_targets_time_major(series)))
    return ad.tensor_mean(ad.mul(diff, diff))


def score_window(
    series: TokenSeries,
    params: ParameterStore,
    embed_cfg: EmbeddingConfig,
    backbone_cfg: BackboneConfig,
    feature_reprs: np.ndarray | None = None,
    encoder_params: ParameterStore | None = None,
    encoder_cfg=None,
    start_time: int = 0,
) -> AnomalyScores:
    """Per-timestamp score: mean over features of squared reconstruction error."""
    if series.order is not Order.FEATURE_MAJOR:
        raise ContractError("score_window expects a feature-major series")
    m, p = series.n_features, series.patches_per_feature
    patch_len = series.patches[0].values.shape[0]

    with ad.no_grad():
        seq = compose_token_embeddings(
            series,
            params,
            embed_cfg,
            feature_reprs=feature_reprs,
            encoder_params=encoder_params,
            encoder_cfg=encoder_cfg,
        )
        hidden = forward(seq.vectors, params, backbone_cfg)
        predicted = reconstruct(hidden, params).data

    sq_err = (predicted - _targets_time_major(series)) ** 2
    per_cell = np.empty((p * patch_len, m), dtype=np.float64)
    for row, (j, i) in enumerate(seq.provenance):
        per_cell[(i - 1) * patch_len : i * patch_len, j - 1] = sq_err[row]
    return AnomalyScores(scores=per_cell.mean(axis=1), start_time=start_time)


def resolve_threshold(
    train_scores: np.ndarray,
    policy: ThresholdPolicy,
    validation_scores: np.ndarray | None = None,
    validation_labels: np.ndarray | None = None,
) -> float:
    """Quantile of training scores, or the F1-best cut on a labeled validation.

    The F1 scan tries every distinct score as the last value predicted normal
    and returns the midpoint between it and the next distinct value, so the
    threshold sits inside the gap rather than on a data point.
    """
    if policy.kind == "quantile":
        train_scores = np.asarray(train_scores, dtype=np.float64)
        if train_scores.size == 0:
            raise ContractError("cannot take a quantile of empty scores")
        return float(np.quantile(train_scores, policy.q))

    if validation_scores is None or validation_labels is None:
        raise ContractError("best_f1 policy needs labeled validation scores")
    scores = np.asarray(validation_scores, dtype=np.float64)
    labels = np.asarray(validation_labels, dtype=bool)
    if scores.size == 0:
        raise ContractError("cannot scan an empty validation set")
    if scores.shape != labels.shape:
        raise ShapeError("validation scores and labels must align")

    distinct = np.unique(scores)
    # scan from the highest cut down so ties resolve to the fewest alarms
    best_threshold = float(distinct[-1])  # nothing anomalous
    best_f1 = f1_score(detect(scores, best_threshold), labels).f1
    for pos in range(distinct.size - 2, -1, -1):
        value = distinct[pos]
        candidate = f1_score(detect(scores, value), labels).f1
        if candidate > best_f1:
            best_f1 = candidate
            best_threshold = float((value + distinct[pos + 1]) / 2.0)
    everything = f1_score(detect(scores, distinct[0] - 1.0), labels).f1
    if everything > best_f1:
        best_threshold = float(distinct[0] - 1.0)
    return best_threshold


def detect(scores: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean predictions: strictly above the threshold is anomalous."""
    if not np.isfinite(threshold):
        raise ParameterError(f"threshold must be finite, got {threshold}")
    return np.asarray(scores, dtype=np.float64) > threshold
