"""End-to-end pipeline: fit on a training series, score and evaluate a test
series, persist and restore the fitted state.

Fitting runs four stages from one root seed: contrastive encoder training,
the backbone pretraining stub, head/projection initialization, and
reconstruction fine-tuning. Each stage draws its seed from a spawned child
sequence, so a single integer reproduces the whole run bitwise.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backbone import BackboneConfig, finetune, pretrain_stub
from .contrastive import EncoderConfig, train_encoder
from .data import LabeledSeries, SyntheticSpec, generate_synthetic
from .detector import (
    ThresholdPolicy,
    add_reconstruction_head,
    detect,
    resolve_threshold,
    score_window,
)
from .embedding import EmbeddingConfig, init_embedding_params
from .errors import ConfigError, ContractError, InsufficientDataError
from .metrics import F1Result, f1_score, point_adjust, roc_auc
from .params import ParameterStore
from .tokenizer import FeatureStats, TokenSeries, normalize_window, patchify

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """All knobs for one run; nested module configs are derived when omitted."""

    patch_len: int = 16
    window_len: int = 128
    d_model: int = 128
    seed: int = 0
    n_negatives: int = 3
    encoder_epochs: int = 5
    encoder_lr: float = 1e-3
    finetune_epochs: int = 6
    finetune_lr: float = 3e-3
    stub_steps: int = 30
    include_patch_code: bool = True
    include_skip_code: bool = True
    include_feature_term: bool = True
    encoder: EncoderConfig = field(default=None)
    backbone: BackboneConfig = field(default=None)

    def __post_init__(self):
        if self.window_len < 1 or self.window_len % self.patch_len != 0:
            raise ConfigError(
                f"window length {self.window_len} must be a positive multiple of "
                f"patch length {self.patch_len}"
            )
        if self.encoder is None:
            self.encoder = EncoderConfig(patch_len=self.patch_len)
        elif self.encoder.patch_len != self.patch_len:
            raise ConfigError("encoder patch_len disagrees with pipeline patch_len")
        if self.backbone is None:
            self.backbone = BackboneConfig(d_model=self.d_model)
        elif self.backbone.d_model != self.d_model:
            raise ConfigError("backbone d_model disagrees with pipeline d_model")

    @property
    def patches_per_feature(self) -> int:
        return self.window_len // self.patch_len

    def embedding_config(self) -> EmbeddingConfig:
        return EmbeddingConfig(
            d_model=self.d_model,
            patch_len=self.patch_len,
            repr_dim=self.encoder.repr_dim,
            include_patch_code=self.include_patch_code,
            include_skip_code=self.include_skip_code,
            include_feature_term=self.include_feature_term,
        )

    def to_dict(self) -> dict:
        return {
            "patch_len": self.patch_len,
            "window_len": self.window_len,
            "d_model": self.d_model,
            "seed": self.seed,
            "n_negatives": self.n_negatives,
            "encoder_epochs": self.encoder_epochs,
            "encoder_lr": self.encoder_lr,
            "finetune_epochs": self.finetune_epochs,
            "finetune_lr": self.finetune_lr,
            "stub_steps": self.stub_steps,
            "include_patch_code": self.include_patch_code,
            "include_skip_code": self.include_skip_code,
            "include_feature_term": self.include_feature_term,
            "encoder": {
                "blocks": self.encoder.blocks,
                "channels": self.encoder.channels,
                "kernel": self.encoder.kernel,
                "repr_dim": self.encoder.repr_dim,
                "patch_len": self.encoder.patch_len,
                "dilations": list(self.encoder.dilations),
            },
            "backbone": {
                "layers": self.backbone.layers,
                "heads": self.backbone.heads,
                "d_model": self.backbone.d_model,
                "d_ff": self.backbone.d_ff,
                "max_seq": self.backbone.max_seq,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        payload = dict(payload)
        encoder = payload.pop("encoder", None)
        backbone = payload.pop("backbone", None)
        known = {f for f in cls.__dataclass_fields__ if f not in ("encoder", "backbone")}
        unknown = payload.keys() - known
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        cfg = cls(
            **payload,
            encoder=EncoderConfig(
                blocks=encoder["blocks"],
                channels=encoder["channels"],
                kernel=encoder["kernel"],
                repr_dim=encoder["repr_dim"],
                patch_len=encoder["patch_len"],
                dilations=tuple(encoder["dilations"]),
            )
            if encoder
            else None,
            backbone=BackboneConfig(**backbone) if backbone else None,
        )
        return cfg


@dataclass
class EvaluationReport:
    precision: float
    recall: float
    f1: float
    auc: float | None
    auc_omitted_reason: str | None
    threshold: float
    threshold_policy: str
    counts: dict
    point_adjusted: bool
    n_scored: int
    n_dropped: int
    degenerate_f1: bool
    runtime_seconds: float

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "auc_omitted_reason": self.auc_omitted_reason,
            "threshold": self.threshold,
            "threshold_policy": self.threshold_policy,
            "counts": dict(self.counts),
            "point_adjusted": self.point_adjusted,
            "n_scored": self.n_scored,
            "n_dropped": self.n_dropped,
            "degenerate_f1": self.degenerate_f1,
        }
        if include_runtime:
            out["runtime_seconds"] = self.runtime_seconds
        return out


def windows_from_values(
    values: np.ndarray, stats: FeatureStats, cfg: PipelineConfig
) -> tuple[list[TokenSeries], int]:
    """Tile the series into non-overlapping windows; drop the partial tail."""
    t_len = values.shape[0]
    n_windows = t_len // cfg.window_len
    dropped = t_len - n_windows * cfg.window_len
    if n_windows == 0:
        raise InsufficientDataError(
            f"series of length {t_len} shorter than one window ({cfg.window_len})"
        )
    if dropped:
        log.info("dropping %d trailing timestamps (partial window)", dropped)
    out = []
    for w in range(n_windows):
        start = w * cfg.window_len
        window = normalize_window(
            values[start : start + cfg.window_len], stats, cfg.patch_len, start_time=start
        )
        out.append(patchify(window, cfg.patch_len))
    return out, dropped


@dataclass
class FittedPipeline:
    cfg: PipelineConfig
    stats: FeatureStats
    params: ParameterStore
    encoder_params: ParameterStore
    train_scores: np.ndarray

    def score_series(self, values: np.ndarray) -> tuple[np.ndarray, int]:
        """Anomaly score per timestamp over all complete windows."""
        windows, dropped = windows_from_values(values, self.stats, self.cfg)
        embed_cfg = self.cfg.embedding_config()
        chunks = []
        for series in windows:
            scores = score_window(
                series,
                self.params,
                embed_cfg,
                self.cfg.backbone,
                encoder_params=self.encoder_params,
                encoder_cfg=self.cfg.encoder,
            )
            chunks.append(scores.scores)
        return np.concatenate(chunks), dropped

    def evaluate(
        self,
        test_values: np.ndarray,
        labels: np.ndarray | None,
        policy: ThresholdPolicy,
        point_adjusted: bool = False,
    ) -> tuple[EvaluationReport, np.ndarray, np.ndarray]:
        """Score, threshold, and measure; returns (report, scores, predictions)."""
        started = time.perf_counter()
        scores, dropped = self.score_series(test_values)
        trimmed_labels = None
        if labels is not None:
            labels = np.asarray(labels, dtype=bool)
            if labels.shape[0] != test_values.shape[0]:
                raise ContractError(
                    f"labels length {labels.shape[0]} != series length {test_values.shape[0]}"
                )
            trimmed_labels = labels[: scores.shape[0]]

        if policy.kind == "best_f1":
            if trimmed_labels is None:
                raise ContractError("best_f1 threshold policy needs labels")
            threshold = resolve_threshold(
                None, policy, validation_scores=scores, validation_labels=trimmed_labels
            )
        else:
            threshold = resolve_threshold(self.train_scores, policy)

        predictions = detect(scores, threshold)
        if point_adjusted and trimmed_labels is not None:
            predictions = point_adjust(predictions, trimmed_labels)

        if trimmed_labels is not None:
            result: F1Result = f1_score(predictions, trimmed_labels)
            auc, auc_reason = None, None
            if trimmed_labels.any() and not trimmed_labels.all():
                auc = roc_auc(scores, trimmed_labels)
            else:
                auc_reason = "labels contain a single class; ROC-AUC undefined"
            report = EvaluationReport(
                precision=result.precision,
                recall=result.recall,
                f1=result.f1,
                auc=auc,
                auc_omitted_reason=auc_reason,
                threshold=float(threshold),
                threshold_policy=policy.kind,
                counts={
                    "tp": result.counts.tp,
                    "fp": result.counts.fp,
                    "tn": result.counts.tn,
                    "fn": result.counts.fn,
                },
                point_adjusted=point_adjusted,
                n_scored=int(scores.shape[0]),
                n_dropped=int(dropped),
                degenerate_f1=result.degenerate,
                runtime_seconds=time.perf_counter() - started,
            )
        else:
            report = EvaluationReport(
                precision=float("nan"),
                recall=float("nan"),
                f1=float("nan"),
                auc=None,
                auc_omitted_reason="no labels provided",
                threshold=float(threshold),
                threshold_policy=policy.kind,
                counts={},
                point_adjusted=point_adjusted,
                n_scored=int(scores.shape[0]),
                n_dropped=int(dropped),
                degenerate_f1=False,
                runtime_seconds=time.perf_counter() - started,
            )
        return report, scores, predictions

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.params.save(out / "model.ckpt")
        self.encoder_params.save(out / "encoder.ckpt")
        (out / "pipeline.json").write_text(
            json.dumps(
                {
                    "config": self.cfg.to_dict(),
                    "stats": {
                        "mean": self.stats.mean.tolist(),
                        "std": self.stats.std.tolist(),
                        "constant": self.stats.constant.tolist(),
                    },
                    "train_scores": self.train_scores.tolist(),
                },
                indent=2,
            )
        )

    @classmethod
    def load(cls, out_dir: str | Path) -> "FittedPipeline":
        out = Path(out_dir)
        payload = json.loads((out / "pipeline.json").read_text())
        cfg = PipelineConfig.from_dict(payload["config"])
        stats = FeatureStats(
            mean=np.array(payload["stats"]["mean"]),
            std=np.array(payload["stats"]["std"]),
            constant=np.array(payload["stats"]["constant"], dtype=bool),
        )
        return cls(
            cfg=cfg,
            stats=stats,
            params=ParameterStore.load(out / "model.ckpt"),
            encoder_params=ParameterStore.load(out / "encoder.ckpt"),
            train_scores=np.array(payload["train_scores"], dtype=np.float64),
        )


def _child_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class StageSeeds:
    """Per-stage integer seeds spawned from one root seed."""

    encoder: int
    stub: int
    embed: int
    head: int
    tune: int


def stage_seeds(seed: int) -> StageSeeds:
    children = np.random.SeedSequence(seed).spawn(5)
    return StageSeeds(*(_child_seed(c) for c in children))


def build_untrained(cfg: PipelineConfig, seeds: StageSeeds) -> ParameterStore:
    """Stub-pretrained backbone plus freshly initialized projections and head."""
    params = pretrain_stub(cfg.backbone, seed=seeds.stub, steps=cfg.stub_steps)
    embed_params = init_embedding_params(cfg.embedding_config(), seed=seeds.embed)
    for name in embed_params.names():
        params.add(name, embed_params.get(name))
    add_reconstruction_head(params, cfg.d_model, cfg.patch_len, seed=seeds.head)
    return params


def fit(
    train_values: np.ndarray,
    cfg: PipelineConfig,
    *,
    encoder_params: ParameterStore | None = None,
    initial_params: ParameterStore | None = None,
    encoder_loss_log: list | None = None,
    finetune_loss_log: list | None = None,
) -> FittedPipeline:
    """Train the full pipeline on an unlabeled training series.

    Pass ``encoder_params`` to reuse a trained encoder instead of training
    one, and ``initial_params`` to fine-tune from an existing model state
    instead of the pretraining stub.
    """
    train_values = np.asarray(train_values, dtype=np.float64)
    if train_values.ndim != 2:
        raise ContractError(f"training series must be (T, M), got {train_values.shape}")
    seq_tokens = train_values.shape[1] * cfg.patches_per_feature
    if seq_tokens > cfg.backbone.max_seq:
        raise ConfigError(
            f"window yields {seq_tokens} tokens, above backbone max_seq "
            f"{cfg.backbone.max_seq}; shrink window_len or raise max_seq"
        )

    seeds = stage_seeds(cfg.seed)
    stats = FeatureStats.fit(train_values)
    windows, _ = windows_from_values(train_values, stats, cfg)

    if encoder_params is None:
        encoder_params = train_encoder(
            windows,
            cfg.encoder,
            n_negatives=cfg.n_negatives,
            epochs=cfg.encoder_epochs,
            lr=cfg.encoder_lr,
            seed=seeds.encoder,
            record_losses=encoder_loss_log,
        )

    params = initial_params if initial_params is not None else build_untrained(cfg, seeds)

    finetune(
        params,
        windows,
        encoder_params,
        cfg.encoder,
        cfg.embedding_config(),
        cfg.backbone,
        epochs=cfg.finetune_epochs,
        lr=cfg.finetune_lr,
        seed=seeds.tune,
        record_losses=finetune_loss_log,
    )

    fitted = FittedPipeline(
        cfg=cfg,
        stats=stats,
        params=params,
        encoder_params=encoder_params,
        train_scores=np.array([]),
    )
    fitted.train_scores, _ = fitted.score_series(train_values)
    return fitted


def synthetic_split(spec: SyntheticSpec) -> tuple[np.ndarray, LabeledSeries]:
    """Train/test pair from one seed: the training half has confounders but no
    anomalies (the benchmark convention of anomaly-free training data)."""
    train_seed, test_seed = np.random.SeedSequence(spec.seed).spawn(2)
    train_spec = SyntheticSpec(
        n_features=spec.n_features,
        length=spec.length,
        periods=spec.periods,
        confounder_rate=spec.confounder_rate,
        anomaly_rate=0.0,
        noise_std=spec.noise_std,
        spike_scale=spec.spike_scale,
        event_len=spec.event_len,
        seed=_child_seed(train_seed),
    )
    test_spec = SyntheticSpec(
        n_features=spec.n_features,
        length=spec.length,
        periods=spec.periods,
        confounder_rate=spec.confounder_rate,
        anomaly_rate=spec.anomaly_rate,
        noise_std=spec.noise_std,
        spike_scale=spec.spike_scale,
        event_len=spec.event_len,
        seed=_child_seed(test_seed),
    )
    return generate_synthetic(train_spec).values, generate_synthetic(test_spec)
