"""Contrastive feature encoder: dilated causal convolutions over patches,
feature-aware triplet sampling, and an InfoNCE-style loss on cosine
similarities.

Patches from the same feature are pulled together, patches from different
features pushed apart, so the learned representation separates features by
their temporal signature rather than their position in the window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import (
    ContractError,
    DegenerateVectorError,
    InsufficientDataError,
    NumericOverflowError,
    ParameterError,
    TrainingDivergedError,
)
from .optim import Adam
from .params import ParameterStore
from .tokenizer import TokenSeries

log = logging.getLogger(__name__)

_replacement_warned: set[tuple[int, int]] = set()


@dataclass
class EncoderConfig:
    blocks: int = 3
    channels: int = 32
    kernel: int = 3
    repr_dim: int = 64
    patch_len: int = 16
    dilations: tuple[int, ...] = field(default=None)

    def __post_init__(self):
        if self.blocks < 1 or self.channels < 1 or self.kernel < 1 or self.repr_dim < 1:
            raise ParameterError("encoder dimensions must all be >= 1")
        if self.dilations is None:
            self.dilations = tuple(2**k for k in range(self.blocks))
        self.dilations = tuple(int(d) for d in self.dilations)
        if len(self.dilations) != self.blocks:
            raise ParameterError(
                f"{self.blocks} blocks need {self.blocks} dilations, got {len(self.dilations)}"
            )
        if any(d != 2**k for k, d in enumerate(self.dilations)):
            raise ParameterError(f"dilations must double per block, got {self.dilations}")
        rf = self.receptive_field
        if rf < self.patch_len:
            log.warning(
                "encoder receptive field %d is smaller than patch length %d",
                rf,
                self.patch_len,
            )

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel - 1) * sum(self.dilations)


def init_encoder_params(cfg: EncoderConfig, seed: int) -> ParameterStore:
    """He-style initialization; biases start at zero."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    store = ParameterStore()
    in_ch = 1
    for b in range(cfg.blocks):
        fan_in = in_ch * cfg.kernel
        store.add(
            f"encoder.block{b}.weight",
            Tensor(rng.normal(scale=np.sqrt(2.0 / fan_in), size=(cfg.channels, in_ch, cfg.kernel))),
        )
        store.add(f"encoder.block{b}.bias", Tensor(np.zeros(cfg.channels)))
        in_ch = cfg.channels
    store.add(
        "encoder.head.weight",
        Tensor(rng.normal(scale=np.sqrt(1.0 / cfg.channels), size=(cfg.channels, cfg.repr_dim))),
    )
    store.add("encoder.head.bias", Tensor(np.zeros(cfg.repr_dim)))
    return store


def encode_values(values: np.ndarray | Tensor, params: ParameterStore, cfg: EncoderConfig) -> Tensor:
    """Encode a (B, L) batch of patch value vectors into (B, repr_dim).

    Conv blocks are causal, so the pre-pool feature map at time t never sees
    values after t; the global max-pool then summarizes the whole patch.
    """
    x = values if isinstance(values, Tensor) else Tensor(values)
    if x.ndim != 2:
        raise ContractError(f"encode_values expects (B, L), got {x.shape}")
    if x.shape[1] != cfg.patch_len:
        raise ContractError(f"patch length {x.shape[1]} != configured {cfg.patch_len}")
    h = x.reshape(x.shape[0], 1, x.shape[1])
    for b in range(cfg.blocks):
        w = params.get(f"encoder.block{b}.weight")
        bias = params.get(f"encoder.block{b}.bias")
        h = ad.conv1d_causal(h, w, dilation=cfg.dilations[b])
        h = ad.add(h, bias.reshape(1, cfg.channels, 1))
        h = ad.leaky_relu(h, slope=0.01)
    pooled = ad.max_pool_over_time(h)  # (B, channels)
    out = ad.matmul(pooled, params.get("encoder.head.weight"))
    return ad.add(out, params.get("encoder.head.bias"))


def encode_patch(patch, params: ParameterStore, cfg: EncoderConfig) -> Tensor:
    """Representation of a single patch, shape (repr_dim,)."""
    if patch.values.shape[0] != cfg.patch_len:
        raise ContractError(
            f"patch has length {patch.values.shape[0]}, encoder expects {cfg.patch_len}"
        )
    return encode_values(patch.values[None, :], params, cfg)[0]


def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """Differentiable cosine; zero-norm input is a hard error, not an epsilon."""
    u = u if isinstance(u, Tensor) else Tensor(u)
    v = v if isinstance(v, Tensor) else Tensor(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ContractError(f"cosine needs matching vectors, got {u.shape} and {v.shape}")
    nu, nv = ad.l2_norm(u), ad.l2_norm(v)
    if nu.item() == 0.0 or nv.item() == 0.0:
        raise DegenerateVectorError("cosine similarity undefined for zero-norm vector")
    return ad.div(ad.dot(u, v), ad.mul(nu, nv))


@dataclass(frozen=True)
class Triplet:
    """Anchor patch, same-feature positive, and cross-feature negatives.

    All entries are (feature, index) pairs, 1-based, into one token series.
    """

    feature: int
    anchor_index: int
    positive_index: int
    negatives: tuple[tuple[int, int], ...]


@dataclass
class TripletBatch:
    triplets: list[Triplet]
    sampled_with_replacement: bool = False


def sample_triplets(series: TokenSeries, n_negatives: int, rng: np.random.Generator) -> TripletBatch:
    """One triplet per feature: anchor/positive share the feature with distinct
    indices; negatives come from other features (distinct features when
    N <= M-1, otherwise with replacement, which is logged)."""
    m, p = series.n_features, series.patches_per_feature
    if m < 2:
        raise InsufficientDataError(f"triplet sampling needs >= 2 features, got {m}")
    if p < 2:
        raise InsufficientDataError(f"triplet sampling needs >= 2 patches per feature, got {p}")
    if n_negatives < 1:
        raise ParameterError(f"need >= 1 negative, got {n_negatives}")

    with_replacement = n_negatives > m - 1
    if with_replacement and (n_negatives, m) not in _replacement_warned:
        # warn once per (N, M) pair; the condition repeats every window
        _replacement_warned.add((n_negatives, m))
        log.warning(
            "N=%d negatives exceeds M-1=%d distinct features; sampling features with replacement",
            n_negatives,
            m - 1,
        )

    triplets = []
    for feature in range(1, m + 1):
        anchor_idx = int(rng.integers(1, p + 1))
        positive_idx = int(rng.integers(1, p))
        if positive_idx >= anchor_idx:
            positive_idx += 1  # uniform over the P-1 indices != anchor
        others = [f for f in range(1, m + 1) if f != feature]
        if with_replacement:
            neg_features = rng.choice(others, size=n_negatives, replace=True)
        else:
            neg_features = rng.choice(others, size=n_negatives, replace=False)
        negatives = tuple(
            (int(f), int(rng.integers(1, p + 1))) for f in neg_features
        )
        triplets.append(
            Triplet(
                feature=feature,
                anchor_index=anchor_idx,
                positive_index=positive_idx,
                negatives=negatives,
            )
        )
    return TripletBatch(triplets=triplets, sampled_with_replacement=with_replacement)


def triplet_loss(anchor_repr: Tensor, positive_repr: Tensor, negative_reprs: list[Tensor]) -> Tensor:
    """L = -log[ exp(f(a,p)) / (exp(f(a,p)) + sum_j exp(f(a,n_j))) ].

    Similarities are cosines in [-1, 1], so the exponentials cannot overflow.
    """
    if not negative_reprs:
        raise ParameterError("triplet loss needs at least one negative")
    sim_pos = cosine_similarity(anchor_repr, positive_repr)
    denom = ad.exp(sim_pos)
    for neg in negative_reprs:
        denom = ad.add(denom, ad.exp(cosine_similarity(anchor_repr, neg)))
    return ad.sub(ad.log(denom), sim_pos)


def epoch_loss(
    series: TokenSeries,
    params: ParameterStore,
    cfg: EncoderConfig,
    n_negatives: int,
    rng: np.random.Generator,
) -> Tensor:
    """Mean triplet loss over all features of one token series."""
    batch = sample_triplets(series, n_negatives, rng)
    p = series.patches_per_feature

    # encode each distinct patch once, then reuse rows
    needed: list[tuple[int, int]] = []
    seen = set()
    for t in batch.triplets:
        for key in [(t.feature, t.anchor_index), (t.feature, t.positive_index), *t.negatives]:
            if key not in seen:
                seen.add(key)
                needed.append(key)
    row_of = {key: row for row, key in enumerate(needed)}
    stacked = np.stack(
        [series.patches[(f - 1) * p + (i - 1)].values for f, i in needed]
    )
    reprs = encode_values(stacked, params, cfg)

    total = None
    for t in batch.triplets:
        anchor = reprs[row_of[(t.feature, t.anchor_index)]]
        positive = reprs[row_of[(t.feature, t.positive_index)]]
        negatives = [reprs[row_of[key]] for key in t.negatives]
        loss = triplet_loss(anchor, positive, negatives)
        total = loss if total is None else ad.add(total, loss)
    return ad.div(total, float(len(batch.triplets)))


def train_encoder(
    train_series: list[TokenSeries],
    cfg: EncoderConfig,
    n_negatives: int = 3,
    epochs: int = 5,
    lr: float = 1e-3,
    seed: int = 0,
    record_losses: list | None = None,
) -> ParameterStore:
    """Fit the encoder by the triplet loss; touches no other model's parameters.

    Pass a list as ``record_losses`` to receive one mean loss per epoch.
    """
    if not train_series:
        raise InsufficientDataError("train_encoder needs at least one token series")
    if epochs < 0:
        raise ParameterError(f"epochs must be >= 0, got {epochs}")
    init_seed, sample_seed = np.random.SeedSequence(seed).spawn(2)
    params = init_encoder_params(cfg, seed=init_seed.entropy % (2**32))
    rng = np.random.default_rng(sample_seed)
    opt = Adam(params, lr=lr)
    for epoch in range(epochs):
        epoch_total = 0.0
        for series in train_series:
            opt.zero_grad()
            try:
                with Tape() as tape:
                    loss = epoch_loss(series, params, cfg, n_negatives, rng)
                    tape.backward(loss)
            except NumericOverflowError as exc:
                raise TrainingDivergedError(
                    f"encoder training diverged at epoch {epoch}: {exc}"
                ) from exc
            epoch_total += loss.item()
            opt.step()
        if record_losses is not None:
            record_losses.append(epoch_total / len(train_series))
    return params


def encode_series(series: TokenSeries, params: ParameterStore, cfg: EncoderConfig) -> tuple[np.ndarray, np.ndarray]:
    """No-grad representations for every patch, in the series' own order.

    Returns (reprs (n, repr_dim), features (n,)) as plain arrays.
    """
    stacked = np.stack([patch.values for patch in series.patches])
    with ad.no_grad():
        reprs = encode_values(stacked, params, cfg)
    features = np.array([patch.feature for patch in series.patches])
    return reprs.data, features


def separation_statistics(reprs: np.ndarray, features: np.ndarray) -> tuple[float, float]:
    """Mean cosine within features vs across features, over all patch pairs."""
    norms = np.linalg.norm(reprs, axis=1)
    if np.any(norms == 0):
        raise DegenerateVectorError("zero-norm representation in separation statistics")
    unit = reprs / norms[:, None]
    sims = unit @ unit.T
    same = features[:, None] == features[None, :]
    off_diag = ~np.eye(len(features), dtype=bool)
    within = float(sims[same & off_diag].mean())
    cross = float(sims[~same].mean())
    return within, cross
