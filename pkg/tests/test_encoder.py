"""Tokenization, vocabulary, and pair-grid construction tests."""

import numpy as np
import pytest

import bicon.diffcore as dc
from bicon import encoder
from bicon.encoder import (EncoderConfig, TokenSeq, Vocab, position_indices, tokenize)
from bicon.errors import ConfigError, DataError


def test_tokenize_splits_punctuation_with_offsets():
    seq = tokenize("Palo Alto, USA.")
    assert seq.tokens == ["Palo", "Alto", ",", "USA", "."]
    assert seq.char_start == [0, 5, 9, 11, 14]
    assert seq.char_end == [4, 9, 10, 14, 15]
    with pytest.raises(DataError):
        tokenize("   ")


def test_token_seq_validation():
    with pytest.raises(DataError):
        TokenSeq(tokens=[], char_start=[], char_end=[])
    with pytest.raises(DataError):
        TokenSeq(tokens=["a"], char_start=[0, 1], char_end=[1])


def test_vocab_build_encode_roundtrip(tmp_path):
    v = Vocab.build(iter(["b", "a", "b", "c"]))
    assert v.tokens[:2] == ["<pad>", "<unk>"]
    assert len(v) == 5
    ids = v.encode(["a", "zzz", "c"])
    assert ids[1] == encoder.UNK_ID
    v.save(tmp_path / "vocab.txt")
    v2 = Vocab.load(tmp_path / "vocab.txt")
    assert v2.tokens == v.tokens
    with pytest.raises(ConfigError):
        Vocab(["a", "b"])  # missing reserved tokens


# Position rule (1-based): cells right of the diagonal hold N-i, others j-N.
def test_position_indices_frozen_n3():
    got = position_indices(3, max_len=8)
    offsets = got - 8
    want = np.array([[-2, 2, 2],
                     [-2, -1, 1],
                     [-2, -1, 0]])
    np.testing.assert_array_equal(offsets, want)


def test_position_indices_goldens():
    p5 = position_indices(5, max_len=8) - 8
    assert p5[0, 2] == 4     # i=1, j=3: N-i
    assert p5[2, 2] == -2    # i=3, j=3: j-N
    assert (position_indices(1, max_len=8) - 8)[0, 0] == 0


def test_position_indices_relative_variant():
    rel = position_indices(4, max_len=8, relative=True) - 8
    want = np.array([[j - i for j in range(4)] for i in range(4)])
    np.testing.assert_array_equal(rel, want)


def test_position_indices_reject_overflow():
    with pytest.raises(DataError):
        position_indices(10, max_len=4)


def _tiny_cfg(**kw):
    base = dict(d_h=8, d_p=4, d_a=4, d_head=2, max_len=10, kind="bi-recurrent")
    base.update(kw)
    return EncoderConfig(**base)


def _setup(kind="bi-recurrent", seed=0):
    cfg = _tiny_cfg(kind=kind)
    vocab = Vocab.build(["ana", "bo", "cova", "da", "sits", "in"])
    params = encoder.init_params(cfg, len(vocab), np.random.default_rng(seed))
    return cfg, vocab, params


@pytest.mark.parametrize("kind", ["embedding-bag", "bi-recurrent", "tiny-attention"])
def test_encode_tokens_shape_all_kinds(kind):
    cfg, vocab, params = _setup(kind)
    h = encoder.encode_tokens(["ana", "sits", "in", "bo"], vocab, params, cfg)
    assert h.data.shape == (4, cfg.d_h)
    assert np.all(np.isfinite(h.data))


def test_encode_rejects_too_long_and_empty():
    cfg, vocab, params = _setup()
    with pytest.raises(DataError, match="rejecting"):
        encoder.encode_tokens(["a"] * 11, vocab, params, cfg)
    with pytest.raises(DataError):
        encoder.encode_tokens([], vocab, params, cfg)


def test_birecurrent_permutation_moves_rows():
    cfg, vocab, params = _setup()
    h1 = encoder.encode_tokens(["ana", "bo", "cova", "da"], vocab, params, cfg).data
    h2 = encoder.encode_tokens(["ana", "cova", "bo", "da"], vocab, params, cfg).data
    assert not np.allclose(h1[1], h2[1])
    assert not np.allclose(h1[2], h2[2])


def test_self_cross_layout(rng):
    h = dc.Tensor(rng.normal(size=(3, 4)).astype(np.float32))
    grid = encoder.self_cross(h).data
    assert grid.shape == (3, 3, 8)
    np.testing.assert_array_equal(grid[1, 2, :4], h.data[1])
    np.testing.assert_array_equal(grid[1, 2, 4:], h.data[2])


def test_self_cross_gradient(rng):
    h = dc.Tensor(rng.normal(size=(3, 4)).astype(np.float32) * 0.3, requires_grad=True)
    w = dc.Tensor(rng.normal(size=(3, 3, 8)).astype(np.float32))
    report = dc.grad_check(lambda: dc.sum_all(encoder.self_cross(h) * w), [h])
    assert report.max_rel_err < 1e-4


def test_attention_grid_symmetric_when_q_equals_k(rng):
    cfg, vocab, params = _setup()
    h = dc.Tensor(rng.normal(size=(4, cfg.d_h)).astype(np.float32))
    params["enc.grid.wk"].data = params["enc.grid.wq"].data.copy()
    att = encoder.attention_grid(h, params["enc.grid.wq"], params["enc.grid.wk"],
                                 cfg.d_a, cfg.d_head).data
    assert att.shape == (4, 4, cfg.d_a)
    np.testing.assert_allclose(att, att.transpose(1, 0, 2), rtol=1e-4, atol=1e-5)


def test_attention_grid_scale_uses_head_dim(rng):
    # Doubling d_head with identical per-head products rescales by 1/sqrt(2);
    # here just pin the computation on a handmade 1-head case.
    h = dc.Tensor(np.array([[1.0, 0.0], [0.0, 2.0]], dtype=np.float32))
    wq = dc.Tensor(np.eye(2, dtype=np.float32))
    wk = dc.Tensor(np.eye(2, dtype=np.float32))
    att = encoder.attention_grid(h, wq, wk, d_a=1, d_head=2).data
    want = np.array([[1.0, 0.0], [0.0, 4.0]]) / np.sqrt(2.0)
    np.testing.assert_allclose(att[:, :, 0], want, rtol=1e-5)


def test_build_pair_grid_shape_and_grad():
    cfg, vocab, params = _setup()
    h = encoder.encode_tokens(["ana", "sits", "in", "bo"], vocab, params, cfg)
    grid = encoder.build_pair_grid(h, params, cfg)
    assert grid.data.shape == (4, 4, cfg.d_h)
    loss = dc.sum_all(grid * grid)
    dc.backward(loss)
    assert params["enc.emb"].grad is not None
    assert params["enc.pos_table"].grad is not None
    assert params["enc.fuse.w_so"].grad is not None


def test_pair_grid_end_to_end_gradient_small():
    cfg, vocab, params = _setup()
    h = encoder.encode_tokens(["ana", "sits", "in"], vocab, params, cfg)
    targets = [params["enc.fuse.w_so"], params["enc.grid.wq"], params["enc.pos_table"]]
    report = dc.grad_check(
        lambda: dc.sum_all(encoder.build_pair_grid(
            encoder.encode_tokens(["ana", "sits", "in"], vocab, params, cfg),
            params, cfg)),
        targets, sample=60, rng=np.random.default_rng(0))
    assert report.max_rel_err < 1e-3, report.worst


def test_encoder_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(d_h=7, kind="bi-recurrent")  # odd width cannot split
    with pytest.raises(ConfigError):
        EncoderConfig(d_h=0)
    with pytest.raises(ConfigError):
        EncoderConfig(kind="transformer-xxl")
