"""Backbone tests: forward semantics, causality, freeze contract, fine-tuning."""

import numpy as np
import pytest

from tripatch import autodiff as ad
from tripatch.autodiff import Tape, Tensor
from tripatch.backbone import (
    BackboneConfig,
    apply_freeze_contract,
    attention_weights,
    finetune,
    forward,
    frozen_checksum,
    init_backbone_params,
    pretrain_stub,
    stub_corpus_loss,
)
from tripatch.contrastive import EncoderConfig, init_encoder_params
from tripatch.detector import add_reconstruction_head, reconstruction_loss
from tripatch.embedding import EmbeddingConfig, init_embedding_params
from tripatch.errors import ContractError, ParameterError
from tripatch.tokenizer import SeriesWindow, patchify

RNG = np.random.default_rng(314)

CFG = BackboneConfig(layers=2, heads=2, d_model=16, d_ff=24, max_seq=64)


def test_config_validation():
    with pytest.raises(ParameterError):
        BackboneConfig(d_model=10, heads=3)
    with pytest.raises(ParameterError):
        BackboneConfig(heads=0)
    BackboneConfig(layers=0)  # depth zero is legal


def test_zero_layers_is_final_norm_only():
    cfg = BackboneConfig(layers=0, heads=2, d_model=8, d_ff=8, max_seq=16)
    params = init_backbone_params(cfg, seed=0)
    x = RNG.normal(size=(5, 8))
    out = forward(Tensor(x), params, cfg).data
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    want = (x - mu) / np.sqrt(var + 1e-5)  # gain 1, bias 0 at init
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_attention_rows_sum_to_one():
    params = init_backbone_params(CFG, seed=1)
    x = Tensor(RNG.normal(size=(7, CFG.d_model)))
    for layer in range(CFG.layers):
        weights = attention_weights(x, params, layer, CFG)
        assert weights.shape == (CFG.heads, 7, 7)
        np.testing.assert_allclose(weights.sum(axis=-1), np.ones((CFG.heads, 7)), atol=1e-12)


def test_attention_is_strictly_causal_mask():
    params = init_backbone_params(CFG, seed=2)
    weights = attention_weights(Tensor(RNG.normal(size=(6, CFG.d_model))), params, 0, CFG)
    for h in range(CFG.heads):
        upper = np.triu(weights[h], k=1)
        np.testing.assert_allclose(upper, np.zeros_like(upper), atol=1e-12)


def test_hidden_states_ignore_future_tokens():
    params = init_backbone_params(CFG, seed=3)
    x = RNG.normal(size=(10, CFG.d_model))
    base = forward(Tensor(x), params, CFG).data
    bumped = x.copy()
    bumped[6, 0] += 5.0  # single coordinate: a uniform shift would vanish in layer norm
    out = forward(Tensor(bumped), params, CFG).data
    np.testing.assert_array_equal(out[:6], base[:6])
    assert not np.allclose(out[6:], base[6:])


def test_forward_rejects_overlength_and_bad_width():
    params = init_backbone_params(CFG, seed=4)
    with pytest.raises(ContractError):
        forward(Tensor(np.zeros((CFG.max_seq + 1, CFG.d_model))), params, CFG)
    with pytest.raises(ContractError):
        forward(Tensor(np.zeros((4, CFG.d_model + 1))), params, CFG)


def test_forward_deterministic():
    params = init_backbone_params(CFG, seed=5)
    x = Tensor(RNG.normal(size=(8, CFG.d_model)))
    assert forward(x, params, CFG).data.tobytes() == forward(x, params, CFG).data.tobytes()


# -- pretraining stub -----------------------------------------------------------------


def test_stub_seed_determinism():
    a = pretrain_stub(CFG, seed=11, steps=6)
    b = pretrain_stub(CFG, seed=11, steps=6)
    assert a.names() == b.names()
    for name in a.names():
        assert a.get(name).data.tobytes() == b.get(name).data.tobytes()
        assert a.is_frozen(name) == b.is_frozen(name)
    c = pretrain_stub(CFG, seed=12, steps=6)
    assert any(
        a.get(n).data.tobytes() != c.get(n).data.tobytes() for n in a.names()
    )


def test_stub_improves_corpus_loss():
    seed = 21
    init_seed = np.random.SeedSequence(seed).spawn(2)[0].entropy % (2**32)
    untrained = init_backbone_params(CFG, seed=init_seed)
    trained = pretrain_stub(CFG, seed=seed, steps=40)
    assert stub_corpus_loss(trained, CFG, seed) < stub_corpus_loss(untrained, CFG, seed)


def test_freeze_mask_is_exactly_attention_and_ff():
    params = pretrain_stub(CFG, seed=1, steps=2)
    for name in params.names():
        should_freeze = ".attn." in name or ".ff." in name
        assert params.is_frozen(name) == should_freeze, name
    frozen = params.frozen_names()
    per_layer = 4 + 4  # wq wk wv wo + w1 b1 w2 b2
    assert len(frozen) == CFG.layers * per_layer


# -- fine-tuning ------------------------------------------------------------------------


ENC_CFG = EncoderConfig(blocks=1, channels=6, kernel=3, repr_dim=5, patch_len=4)
EMB_CFG = EmbeddingConfig(d_model=16, patch_len=4, repr_dim=5)


def build_model(seed=0):
    params = pretrain_stub(CFG, seed=seed, steps=4)
    emb = init_embedding_params(EMB_CFG, seed=seed + 1)
    for name in emb.names():
        params.add(name, emb.get(name))
    add_reconstruction_head(params, CFG.d_model, EMB_CFG.patch_len, seed=seed + 2)
    return params


def make_series(n=2, m=3, p=4):
    rng = np.random.default_rng(0)
    out = []
    for _ in range(n):
        t = np.arange(p * 4, dtype=float)
        cols = [np.sin(2 * np.pi * t / (6.0 + 3 * j)) + 0.05 * rng.normal(size=t.size) for j in range(m)]
        out.append(patchify(SeriesWindow(values=np.column_stack(cols), start_time=0), 4))
    return out


def snapshot(params, names):
    return {n: params.get(n).data.copy() for n in names}


def test_finetune_epochs_zero_is_identity():
    params = build_model()
    series = make_series()
    enc = init_encoder_params(ENC_CFG, seed=3)
    before = snapshot(params, params.names())
    finetune(params, series, enc, ENC_CFG, EMB_CFG, CFG, epochs=0, seed=0)
    for name, data in before.items():
        assert params.get(name).data.tobytes() == data.tobytes()


def test_finetune_respects_freeze_contract():
    params = build_model()
    series = make_series()
    enc = init_encoder_params(ENC_CFG, seed=3)
    checksum_before = frozen_checksum(params)
    frozen_before = snapshot(params, params.frozen_names())
    live_before = snapshot(params, params.trainable_names())
    finetune(params, series, enc, ENC_CFG, EMB_CFG, CFG, epochs=3, lr=1e-3, seed=1)
    assert frozen_checksum(params) == checksum_before
    for name, data in frozen_before.items():
        assert params.get(name).data.tobytes() == data.tobytes()
    assert any(
        params.get(name).data.tobytes() != data.tobytes()
        for name, data in live_before.items()
    )


def test_finetune_reduces_reconstruction_loss():
    params = build_model(seed=5)
    series = make_series(n=3)
    enc = init_encoder_params(ENC_CFG, seed=6)

    def mean_loss():
        from tripatch.contrastive import encode_values

        total = 0.0
        for s in series:
            values = np.stack([p.values for p in s.patches])
            with ad.no_grad():
                reprs = encode_values(values, enc, ENC_CFG).data
                total += reconstruction_loss(s, params, EMB_CFG, CFG, reprs).item()
        return total / len(series)

    before = mean_loss()
    finetune(params, series, enc, ENC_CFG, EMB_CFG, CFG, epochs=30, lr=3e-3, seed=2)
    assert mean_loss() < before


def test_trainable_tensors_get_gradients():
    params = build_model(seed=7)
    series = make_series(n=1)[0]
    enc = init_encoder_params(ENC_CFG, seed=8)
    from tripatch.contrastive import encode_values

    values = np.stack([p.values for p in series.patches])
    with ad.no_grad():
        reprs = encode_values(values, enc, ENC_CFG).data
    params.zero_grad()
    with Tape() as tape:
        tape.backward(reconstruction_loss(series, params, EMB_CFG, CFG, reprs))
    for name in ("backbone.layer0.ln1.gain", "backbone.final_norm.gain", "embed.value_proj", "head.weight"):
        grad = params.get(name).grad
        assert grad is not None and np.any(grad != 0), name
    for name in params.frozen_names():
        assert params.get(name).grad is None, name


def test_finetune_never_touches_encoder():
    params = build_model(seed=9)
    series = make_series(n=2)
    enc = init_encoder_params(ENC_CFG, seed=10)
    enc_before = {n: enc.get(n).data.copy() for n in enc.names()}
    finetune(params, series, enc, ENC_CFG, EMB_CFG, CFG, epochs=2, seed=3)
    for name, data in enc_before.items():
        assert enc.get(name).data.tobytes() == data.tobytes()
