"""Token embedding composition.

Each patch token is the sum of four terms: a linear projection of its raw
values, a sinusoidal code for its position in the feature-major ordering, a
second sinusoidal code (different frequency family) for its position in the
time-major ordering, and a projection of its contrastive feature
representation. The composed sequence is emitted in time-major order, so
patches sharing a temporal index sit next to each other.

Ablation flags remove exactly one additive term and leave the rest bitwise
unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .contrastive import EncoderConfig, encode_values
from .errors import ContractError, ParameterError, ShapeError
from .params import ParameterStore
from .tokenizer import Order, TokenSeries, feature_major_position, time_major_position

PATCH_CODE_BASE = 10000.0
SKIP_CODE_BASE = 97.0


@dataclass
class EmbeddingConfig:
    d_model: int = 128
    patch_len: int = 16
    repr_dim: int = 64
    include_patch_code: bool = True
    include_skip_code: bool = True
    include_feature_term: bool = True

    def __post_init__(self):
        if self.d_model < 2 or self.d_model % 2 != 0:
            raise ParameterError(f"d_model must be even and >= 2, got {self.d_model}")
        if self.patch_len < 1 or self.repr_dim < 1:
            raise ParameterError("patch_len and repr_dim must be >= 1")


@dataclass
class EmbeddingSequence:
    """(P*M, d_model) token vectors in time-major order with per-row provenance."""

    vectors: Tensor
    provenance: list[tuple[int, int]]  # (feature j, index i) per row
    n_features: int
    patches_per_feature: int


def positional_code(position: int, d_model: int, base: float = PATCH_CODE_BASE) -> np.ndarray:
    """Sinusoidal position code: even coords sin, odd coords cos."""
    if position < 0:
        raise ParameterError(f"position must be >= 0, got {position}")
    if d_model < 2 or d_model % 2 != 0:
        raise ParameterError(f"d_model must be even and >= 2, got {d_model}")
    half = d_model // 2
    freqs = base ** (-np.arange(half, dtype=np.float64) / half)
    angles = position * freqs
    code = np.empty(d_model, dtype=np.float64)
    code[0::2] = np.sin(angles)
    code[1::2] = np.cos(angles)
    return code


def _code_table(max_position: int, d_model: int, base: float) -> np.ndarray:
    return np.stack([positional_code(p, d_model, base) for p in range(max_position + 1)])


def init_embedding_params(cfg: EmbeddingConfig, seed: int) -> ParameterStore:
    """Value and feature projections; no biases, so zero inputs map to zero."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    store = ParameterStore()
    store.add(
        "embed.value_proj",
        Tensor(rng.normal(scale=np.sqrt(1.0 / cfg.patch_len), size=(cfg.patch_len, cfg.d_model))),
    )
    store.add(
        "embed.feature_proj",
        Tensor(rng.normal(scale=np.sqrt(1.0 / cfg.repr_dim), size=(cfg.repr_dim, cfg.d_model))),
    )
    return store


def value_projection(patch, weight: Tensor) -> Tensor:
    """Linear (bias-free) map of raw patch values into model space."""
    if patch.values.shape[0] != weight.shape[0]:
        raise ShapeError(
            f"patch length {patch.values.shape[0]} != projection rows {weight.shape[0]}"
        )
    return ad.matmul(Tensor(patch.values[None, :]), weight)[0]


def compose_token_embeddings(
    series: TokenSeries,
    params: ParameterStore,
    cfg: EmbeddingConfig,
    feature_reprs: np.ndarray | None = None,
    encoder_params: ParameterStore | None = None,
    encoder_cfg: EncoderConfig | None = None,
) -> EmbeddingSequence:
    """Build the time-major embedding sequence for one feature-major series.

    ``feature_reprs`` are per-patch encoder outputs in the series' own
    (feature-major) order; pass them precomputed, or pass encoder params and
    config to compute them here without gradient tracking (the encoder trains
    in its own loop, not through this path).
    """
    if series.order is not Order.FEATURE_MAJOR:
        raise ContractError("compose_token_embeddings expects a feature-major series")
    m, p = series.n_features, series.patches_per_feature
    n_tokens = m * p

    values = np.stack([patch.values for patch in series.patches])
    if values.shape[1] != cfg.patch_len:
        raise ShapeError(f"patch length {values.shape[1]} != configured {cfg.patch_len}")
    tokens = ad.matmul(Tensor(values), params.get("embed.value_proj"))

    if cfg.include_feature_term:
        if feature_reprs is None:
            if encoder_params is None or encoder_cfg is None:
                raise ContractError(
                    "feature term needs feature_reprs or encoder params and config"
                )
            with ad.no_grad():
                feature_reprs = encode_values(values, encoder_params, encoder_cfg).data
        feature_reprs = np.asarray(feature_reprs, dtype=np.float64)
        if feature_reprs.shape != (n_tokens, cfg.repr_dim):
            raise ShapeError(
                f"feature reprs shape {feature_reprs.shape} != ({n_tokens}, {cfg.repr_dim})"
            )
        tokens = ad.add(tokens, ad.matmul(Tensor(feature_reprs), params.get("embed.feature_proj")))

    # positions follow the 1-based algebra: patch s_i^j sits at (j-1)P+i in the
    # feature-major ordering and (i-1)M+j in the time-major ordering
    fm_rows = np.arange(n_tokens)
    feats = fm_rows // p + 1
    idxs = fm_rows % p + 1
    if cfg.include_patch_code:
        table_a = _code_table(n_tokens, cfg.d_model, PATCH_CODE_BASE)
        tokens = ad.add(tokens, Tensor(table_a[(feats - 1) * p + idxs]))
    if cfg.include_skip_code:
        table_b = _code_table(n_tokens, cfg.d_model, SKIP_CODE_BASE)
        tokens = ad.add(tokens, Tensor(table_b[(idxs - 1) * m + feats]))

    # reorder rows feature-major -> time-major
    perm = np.empty(n_tokens, dtype=np.int64)
    provenance: list[tuple[int, int]] = [None] * n_tokens
    for j in range(1, m + 1):
        for i in range(1, p + 1):
            row_tm = time_major_position(j, i, m)
            perm[row_tm] = feature_major_position(j, i, p)
            provenance[row_tm] = (j, i)
    vectors = ad.gather_rows(tokens, perm)
    return EmbeddingSequence(
        vectors=vectors, provenance=provenance, n_features=m, patches_per_feature=p
    )
