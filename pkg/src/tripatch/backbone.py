"""Small GPT-style transformer body with a freeze contract.

Pre-norm causal self-attention stack. After the pretraining stub runs, every
attention and feed-forward tensor is frozen; normalization gains/biases stay
trainable, as do the embedding projections and reconstruction head that other
modules add to the same parameter store. Fine-tuning therefore adapts the
model to a dataset without touching the pretrained body.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import (
    ContractError,
    NumericOverflowError,
    ParameterError,
    TrainingDivergedError,
)
from .optim import Adam
from .params import ParameterStore

_MASK_VALUE = -1e9
_FROZEN_MARKERS = (".attn.", ".ff.")


@dataclass
class BackboneConfig:
    layers: int = 4
    heads: int = 4
    d_model: int = 128
    d_ff: int = 256
    max_seq: int = 512

    def __post_init__(self):
        if self.layers < 0 or self.heads < 1 or self.d_model < 1 or self.d_ff < 1:
            raise ParameterError("backbone dimensions must be positive (layers may be 0)")
        if self.d_model % self.heads != 0:
            raise ParameterError(
                f"d_model {self.d_model} not divisible by heads {self.heads}"
            )
        if self.max_seq < 1:
            raise ParameterError("max_seq must be >= 1")


def init_backbone_params(cfg: BackboneConfig, seed: int) -> ParameterStore:
    """GPT-style init: weights normal(0, 0.02), norm gains 1, all biases 0."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    store = ParameterStore()
    d, f = cfg.d_model, cfg.d_ff

    def weight(shape):
        return Tensor(rng.normal(scale=0.02, size=shape))

    for layer in range(cfg.layers):
        prefix = f"backbone.layer{layer}"
        store.add(f"{prefix}.ln1.gain", Tensor(np.ones(d)))
        store.add(f"{prefix}.ln1.bias", Tensor(np.zeros(d)))
        for name in ("wq", "wk", "wv", "wo"):
            store.add(f"{prefix}.attn.{name}", weight((d, d)))
        store.add(f"{prefix}.ln2.gain", Tensor(np.ones(d)))
        store.add(f"{prefix}.ln2.bias", Tensor(np.zeros(d)))
        store.add(f"{prefix}.ff.w1", weight((d, f)))
        store.add(f"{prefix}.ff.b1", Tensor(np.zeros(f)))
        store.add(f"{prefix}.ff.w2", weight((f, d)))
        store.add(f"{prefix}.ff.b2", Tensor(np.zeros(d)))
    store.add("backbone.final_norm.gain", Tensor(np.ones(d)))
    store.add("backbone.final_norm.bias", Tensor(np.zeros(d)))
    return store


def apply_freeze_contract(store: ParameterStore) -> list[str]:
    """Freeze attention and feed-forward tensors; everything else stays live."""
    return store.freeze_matching(
        lambda name: any(marker in name for marker in _FROZEN_MARKERS)
    )


def frozen_checksum(store: ParameterStore) -> str:
    """Checksum over the currently frozen tensors (the freeze-contract witness)."""
    return store.checksum(store.frozen_names())


def _causal_mask(seq_len: int) -> np.ndarray:
    mask = np.zeros((seq_len, seq_len))
    mask[np.triu_indices(seq_len, k=1)] = _MASK_VALUE
    return mask


def _attention(x: Tensor, params: ParameterStore, layer: int, cfg: BackboneConfig) -> Tensor:
    prefix = f"backbone.layer{layer}.attn"
    seq_len = x.shape[0]
    d_head = cfg.d_model // cfg.heads
    scale = 1.0 / np.sqrt(d_head)
    mask = Tensor(_causal_mask(seq_len))

    q = ad.matmul(x, params.get(f"{prefix}.wq"))
    k = ad.matmul(x, params.get(f"{prefix}.wk"))
    v = ad.matmul(x, params.get(f"{prefix}.wv"))

    head_outputs = []
    for h in range(cfg.heads):
        lo, hi = h * d_head, (h + 1) * d_head
        q_h, k_h, v_h = q[:, lo:hi], k[:, lo:hi], v[:, lo:hi]
        scores = ad.add(ad.mul(ad.matmul(q_h, k_h.transpose()), scale), mask)
        weights = ad.softmax(scores, axis=-1)
        head_outputs.append(ad.matmul(weights, v_h))
    merged = ad.concat(head_outputs, axis=1)
    return ad.matmul(merged, params.get(f"{prefix}.wo"))


def _feed_forward(x: Tensor, params: ParameterStore, layer: int) -> Tensor:
    prefix = f"backbone.layer{layer}.ff"
    h = ad.add(ad.matmul(x, params.get(f"{prefix}.w1")), params.get(f"{prefix}.b1"))
    h = ad.gelu(h)
    return ad.add(ad.matmul(h, params.get(f"{prefix}.w2")), params.get(f"{prefix}.b2"))


def forward(tokens: Tensor, params: ParameterStore, cfg: BackboneConfig) -> Tensor:
    """Hidden states for a (S, d_model) token sequence, causal over positions."""
    x = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    if x.ndim != 2 or x.shape[1] != cfg.d_model:
        raise ContractError(f"tokens must be (S, {cfg.d_model}), got {x.shape}")
    if x.shape[0] > cfg.max_seq:
        raise ContractError(f"sequence length {x.shape[0]} exceeds max_seq {cfg.max_seq}")
    h = x
    for layer in range(cfg.layers):
        normed = ad.layer_norm(
            h,
            params.get(f"backbone.layer{layer}.ln1.gain"),
            params.get(f"backbone.layer{layer}.ln1.bias"),
        )
        h = ad.add(h, _attention(normed, params, layer, cfg))
        normed = ad.layer_norm(
            h,
            params.get(f"backbone.layer{layer}.ln2.gain"),
            params.get(f"backbone.layer{layer}.ln2.bias"),
        )
        h = ad.add(h, _feed_forward(normed, params, layer))
    return ad.layer_norm(
        h, params.get("backbone.final_norm.gain"), params.get("backbone.final_norm.bias")
    )


def attention_weights(
    tokens: Tensor | np.ndarray, params: ParameterStore, layer: int, cfg: BackboneConfig
) -> np.ndarray:
    """Post-softmax attention matrices (heads, S, S) for inspection only."""
    x = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    with ad.no_grad():
        prefix = f"backbone.layer{layer}.attn"
        q = ad.matmul(x, params.get(f"{prefix}.wq"))
        k = ad.matmul(x, params.get(f"{prefix}.wk"))
        d_head = cfg.d_model // cfg.heads
        mask = Tensor(_causal_mask(x.shape[0]))
        out = []
        for h in range(cfg.heads):
            lo, hi = h * d_head, (h + 1) * d_head
            scores = ad.add(
                ad.mul(ad.matmul(q[:, lo:hi], k[:, lo:hi].transpose()), 1.0 / np.sqrt(d_head)),
                mask,
            )
            out.append(ad.softmax(scores, axis=-1).data)
    return np.stack(out)


def _stub_corpus(cfg: BackboneConfig, rng: np.random.Generator, n_sequences: int, seq_len: int):
    """Smooth sinusoid mixtures in model space for next-step regression."""
    t = np.arange(seq_len, dtype=np.float64)
    corpus = []
    for _ in range(n_sequences):
        periods = rng.uniform(4.0, seq_len, size=cfg.d_model)
        phases = rng.uniform(0.0, 2 * np.pi, size=cfg.d_model)
        amps = rng.uniform(0.2, 1.0, size=cfg.d_model)
        corpus.append(amps * np.sin(2 * np.pi * t[:, None] / periods + phases))
    return corpus


def _next_step_loss(seq: np.ndarray, params: ParameterStore, cfg: BackboneConfig) -> Tensor:
    hidden = forward(Tensor(seq[:-1]), params, cfg)
    target = Tensor(seq[1:])
    diff = ad.sub(hidden, target)
    return ad.tensor_mean(ad.mul(diff, diff))


def pretrain_stub(
    cfg: BackboneConfig,
    seed: int,
    n_sequences: int = 4,
    seq_len: int = 24,
    steps: int = 30,
    lr: float = 1e-3,
) -> ParameterStore:
    """Brief next-step regression on synthetic sequences, then freeze the body.

    Stands in for pretrained weights: enough training that the frozen layers
    compute something non-degenerate, cheap enough to run in tests.
    """
    init_seed, corpus_seed = np.random.SeedSequence(seed).spawn(2)
    params = init_backbone_params(cfg, seed=init_seed.entropy % (2**32))
    corpus = _stub_corpus(cfg, np.random.default_rng(corpus_seed), n_sequences, seq_len)
    opt = Adam(params, lr=lr)
    for step in range(steps):
        seq = corpus[step % len(corpus)]
        opt.zero_grad()
        try:
            with Tape() as tape:
                tape.backward(_next_step_loss(seq, params, cfg))
        except NumericOverflowError as exc:
            raise TrainingDivergedError(f"pretraining stub diverged at step {step}: {exc}") from exc
        opt.step()
    apply_freeze_contract(params)
    return params


def stub_corpus_loss(params: ParameterStore, cfg: BackboneConfig, seed: int,
                     n_sequences: int = 4, seq_len: int = 24) -> float:
    """Mean next-step loss over the stub corpus for a given seed (for audits)."""
    _, corpus_seed = np.random.SeedSequence(seed).spawn(2)
    corpus = _stub_corpus(cfg, np.random.default_rng(corpus_seed), n_sequences, seq_len)
    with ad.no_grad():
        return float(np.mean([_next_step_loss(seq, params, cfg).item() for seq in corpus]))


def finetune(
    params: ParameterStore,
    train_series: list,
    encoder_params: ParameterStore,
    encoder_cfg,
    embed_cfg,
    backbone_cfg: BackboneConfig,
    epochs: int = 1,
    lr: float = 1e-3,
    seed: int = 0,
    record_losses: list | None = None,
) -> ParameterStore:
    """Reconstruction fine-tuning of the non-frozen tensors.

    The contrastive encoder is read, never written: its representations enter
    as fixed inputs, matching its independent training loop. Pass a list as
    ``record_losses`` to receive one mean loss per epoch.
    """
    from .detector import reconstruction_loss  # deferred: detector imports forward()

    if epochs < 0:
        raise ParameterError(f"epochs must be >= 0, got {epochs}")
    if not train_series:
        raise ContractError("finetune needs at least one training series")

    from .contrastive import encode_values

    reprs_per_series = []
    for series in train_series:
        values = np.stack([patch.values for patch in series.patches])
        with ad.no_grad():
            reprs_per_series.append(encode_values(values, encoder_params, encoder_cfg).data)

    order = np.random.default_rng(np.random.SeedSequence(seed))
    opt = Adam(params, lr=lr)
    for epoch in range(epochs):
        epoch_total = 0.0
        for idx in order.permutation(len(train_series)):
            series = train_series[idx]
            opt.zero_grad()
            try:
                with Tape() as tape:
                    loss = reconstruction_loss(
                        series, params, embed_cfg, backbone_cfg, reprs_per_series[idx]
                    )
                    tape.backward(loss)
            except NumericOverflowError as exc:
                raise TrainingDivergedError(
                    f"fine-tuning diverged at epoch {epoch}: {exc}"
                ) from exc
            epoch_total += loss.item()
            opt.step()
        if record_losses is not None:
            record_losses.append(epoch_total / len(train_series))
    return params
