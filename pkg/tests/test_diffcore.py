"""Autodiff engine tests: reference implementations first, then gradients."""

import numpy as np
import pytest

import bicon.diffcore as dc
from bicon.errors import ConfigError, ShapeError


# ---------------------------------------------------------------------------
# Reference oracles, written independently of the engine.

def conv2d_ref(x: np.ndarray, w: np.ndarray, padding: str = "zeros") -> np.ndarray:
    """Nested-loop 2D convolution oracle. x [C_in,H,W], w [C_out,C_in,k,k]."""
    c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    r = k // 2
    out = np.zeros((c_out, h, wd), dtype=np.float64)
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                acc = 0.0
                for c in range(c_in):
                    for a in range(-r, r + 1):
                        for b in range(-r, r + 1):
                            ii, jj = i + a, j + b
                            if padding == "edge":
                                ii = min(max(ii, 0), h - 1)
                                jj = min(max(jj, 0), wd - 1)
                                v = x[c, ii, jj]
                            elif 0 <= ii < h and 0 <= jj < wd:
                                v = x[c, ii, jj]
                            else:
                                v = 0.0
                            acc += v * w[o, c, a + r, b + r]
                out[o, i, j] = acc
    return out


def softmax_ref(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# Forward values against the oracles.

@pytest.mark.parametrize("padding", ["zeros", "edge"])
@pytest.mark.parametrize("k", [3, 5])
def test_conv2d_matches_nested_loop_oracle(rng, padding, k):
    x = rng.normal(size=(3, 6, 7)).astype(np.float32)
    w = rng.normal(size=(2, 3, k, k)).astype(np.float32)
    got = dc.conv2d(dc.Tensor(x), dc.Tensor(w), pad_mode=padding).data
    want = conv2d_ref(x, w, padding)
    np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_conv2d_frozen_golden():
    # All-ones 3x3 input and kernel: each output counts reachable cells.
    x = dc.Tensor(np.ones((1, 3, 3), dtype=np.float32))
    w = dc.Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
    got = dc.conv2d(x, w, pad_mode="zeros").data[0]
    want = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], dtype=np.float32)
    np.testing.assert_array_equal(got, want)
    got_edge = dc.conv2d(x, w, pad_mode="edge").data[0]
    np.testing.assert_array_equal(got_edge, np.full((3, 3), 9.0, dtype=np.float32))


def test_conv2d_rejects_even_kernels(rng):
    x = dc.Tensor(rng.normal(size=(1, 4, 4)).astype(np.float32))
    w = dc.Tensor(rng.normal(size=(1, 1, 2, 2)).astype(np.float32))
    with pytest.raises(ConfigError):
        dc.conv2d(x, w)


def test_softmax_rows_sum_to_one_and_match_reference(rng):
    x = rng.normal(size=(5, 7)).astype(np.float32) * 3
    out = dc.softmax(dc.Tensor(x), axis=-1).data
    np.testing.assert_allclose(out.sum(axis=-1), np.ones(5), rtol=1e-6)
    np.testing.assert_allclose(out, softmax_ref(x), rtol=1e-5, atol=1e-7)
    shifted = dc.softmax(dc.Tensor(x + 1000.0), axis=-1).data
    np.testing.assert_allclose(shifted, out, rtol=1e-4, atol=1e-6)


def test_cross_entropy_uniform_logits_is_log_k():
    logits = dc.Tensor(np.zeros((6, 4), dtype=np.float32))
    gold = np.array([0, 1, 2, 3, 0, 1])
    out = dc.cross_entropy(logits, gold)
    assert out.data.shape == ()
    np.testing.assert_allclose(float(out.data), np.log(4.0), rtol=1e-6)


def test_cross_entropy_mask_drops_cells():
    logits = np.zeros((4, 3), dtype=np.float32)
    logits[2] = [100.0, 0.0, 0.0]  # a wrong, confident row
    gold = np.array([0, 0, 1, 0])
    mask = np.array([True, True, False, True])
    out = dc.cross_entropy(dc.Tensor(logits), gold, mask=mask)
    np.testing.assert_allclose(float(out.data), np.log(3.0), rtol=1e-6)


def test_layer_norm_standardizes_last_axis(rng):
    x = rng.normal(size=(4, 9)).astype(np.float32) * 5 + 2
    g = dc.Tensor(np.ones(9, dtype=np.float32))
    b = dc.Tensor(np.zeros(9, dtype=np.float32))
    out = dc.layer_norm(dc.Tensor(x), g, b).data
    np.testing.assert_allclose(out.mean(axis=-1), np.zeros(4), atol=1e-6)
    np.testing.assert_allclose(out.std(axis=-1), np.ones(4), atol=1e-3)


def test_elu_and_relu_values():
    x = dc.Tensor(np.array([-2.0, -0.5, 0.0, 1.5], dtype=np.float32))
    np.testing.assert_allclose(dc.relu(x).data, [0.0, 0.0, 0.0, 1.5])
    np.testing.assert_allclose(
        dc.elu(x).data, [np.expm1(-2.0), np.expm1(-0.5), 0.0, 1.5], rtol=1e-6)


def test_matmul_shape_error_names_both_shapes(rng):
    a = dc.Tensor(rng.normal(size=(3, 4)).astype(np.float32))
    b = dc.Tensor(rng.normal(size=(5, 6)).astype(np.float32))
    with pytest.raises(ShapeError, match=r"3, 4.*5, 6"):
        dc.matmul(a, b)


def test_ops_follow_float32_inputs(rng):
    x = dc.Tensor(rng.normal(size=(3, 3)).astype(np.float32))
    assert dc.sigmoid(x).data.dtype == np.float32
    assert dc.matmul(x, x).data.dtype == np.float32
    assert dc.layer_norm(x, dc.Tensor(np.ones(3, np.float32)),
                         dc.Tensor(np.zeros(3, np.float32))).data.dtype == np.float32


# ---------------------------------------------------------------------------
# Backward: accumulation, broadcasting, and finite differences per op.

def test_fanout_accumulates_gradients():
    x = dc.Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
    y = dc.sum_all(x + x)
    dc.backward(y)
    np.testing.assert_allclose(x.grad, [2.0, 2.0])


def test_broadcast_backward_unbroadcasts(rng):
    a = dc.Tensor(rng.normal(size=(3, 1)).astype(np.float32), requires_grad=True)
    b = dc.Tensor(rng.normal(size=(1, 4)).astype(np.float32), requires_grad=True)
    dc.backward(dc.sum_all(a * b))
    assert a.grad.shape == (3, 1) and b.grad.shape == (1, 4)
    np.testing.assert_allclose(a.grad[:, 0], np.repeat(b.data.sum(), 3), rtol=1e-5)


def test_zero_grad_resets():
    x = dc.Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    dc.backward(dc.sum_all(x * x))
    assert x.grad is not None
    dc.zero_grad([x])
    assert x.grad is None


def _check(f, *tensors, step=1e-3, tol=1e-4):
    report = dc.grad_check(f, list(tensors), step=step)
    assert report.max_rel_err < tol, report.worst


def test_grad_add_mul_matmul(rng):
    a = dc.Tensor(rng.normal(size=(3, 4)).astype(np.float32) * 0.1, requires_grad=True)
    b = dc.Tensor(rng.normal(size=(4, 2)).astype(np.float32) * 0.1, requires_grad=True)
    _check(lambda: dc.sum_all(dc.matmul(a, b)), a, b)
    c = dc.Tensor(rng.normal(size=(3, 4)).astype(np.float32) * 0.1, requires_grad=True)
    _check(lambda: dc.sum_all((a + c) * c - a), a, c)


def test_grad_batched_matmul(rng):
    a = dc.Tensor(rng.normal(size=(5, 3, 4)).astype(np.float32) * 0.1, requires_grad=True)
    b = dc.Tensor(rng.normal(size=(5, 4, 2)).astype(np.float32) * 0.1, requires_grad=True)
    _check(lambda: dc.sum_all(dc.matmul(a, b)), a, b)


def test_grad_activations_and_norm(rng):
    x = dc.Tensor(rng.normal(size=(4, 6)).astype(np.float32) * 0.5 + 0.3,
                  requires_grad=True)
    g = dc.Tensor(rng.normal(size=(6,)).astype(np.float32) * 0.1 + 1.0, requires_grad=True)
    b = dc.Tensor(rng.normal(size=(6,)).astype(np.float32) * 0.1, requires_grad=True)
    _check(lambda: dc.sum_all(dc.sigmoid(x)), x)
    _check(lambda: dc.sum_all(dc.tanh(x)), x)
    _check(lambda: dc.sum_all(dc.elu(x)), x)
    _check(lambda: dc.sum_all(dc.layer_norm(x, g, b)), x, g, b)
    _check(lambda: dc.sum_all(dc.softmax(x, axis=-1) * dc.softmax(x, axis=-1)), x)


def test_grad_pools(rng):
    x = dc.Tensor(rng.normal(size=(5, 4, 3)).astype(np.float32), requires_grad=True)
    _check(lambda: dc.sum_all(dc.avg_pool(x, axes=(0, 1))), x)
    # max_pool has kinks where coordinates tie; random draws are tie-free.
    _check(lambda: dc.sum_all(dc.max_pool(x, axes=(0, 1))), x)


def test_grad_conv2d_both_paddings(rng):
    for padding in ("zeros", "edge"):
        x = dc.Tensor(rng.normal(size=(2, 5, 5)).astype(np.float32) * 0.2,
                      requires_grad=True)
        w = dc.Tensor(rng.normal(size=(3, 2, 3, 3)).astype(np.float32) * 0.2,
                      requires_grad=True)
        _check(lambda: dc.sum_all(dc.conv2d(x, w, pad_mode=padding)), x, w)


def test_grad_embedding_and_slice(rng):
    table = dc.Tensor(rng.normal(size=(7, 4)).astype(np.float32) * 0.3,
                      requires_grad=True)
    ids = np.array([0, 3, 3, 6])
    _check(lambda: dc.sum_all(dc.embedding(table, ids)), table)
    x = dc.Tensor(rng.normal(size=(6, 3)).astype(np.float32), requires_grad=True)
    _check(lambda: dc.sum_all(dc.slice_axis0(x, 2, 5)), x)


def test_grad_reshape_transpose_concat(rng):
    a = dc.Tensor(rng.normal(size=(2, 6)).astype(np.float32), requires_grad=True)
    b = dc.Tensor(rng.normal(size=(2, 6)).astype(np.float32), requires_grad=True)
    _check(lambda: dc.sum_all(dc.reshape(dc.concat([a, b], axis=0), (4, 3, 2))), a, b)
    _check(lambda: dc.sum_all(dc.transpose(a, (1, 0)) * dc.transpose(b, (1, 0))), a, b)


def test_grad_cross_entropy(rng):
    logits = dc.Tensor(rng.normal(size=(5, 4)).astype(np.float32), requires_grad=True)
    gold = np.array([0, 2, 1, 3, 2])
    mask = np.array([True, True, False, True, True])
    _check(lambda: dc.cross_entropy(logits, gold, mask=mask), logits)


def test_grad_check_flags_relu_kink():
    x = dc.Tensor(np.array([0.0, 0.5, -0.7], dtype=np.float32), requires_grad=True)
    report = dc.grad_check(lambda: dc.sum_all(dc.relu(x)), [x])
    assert report.flagged, "the coordinate sitting exactly on the relu kink must be flagged"


def test_grad_check_restores_dtype(rng):
    x = dc.Tensor(rng.normal(size=(3,)).astype(np.float32), requires_grad=True)
    dc.grad_check(lambda: dc.sum_all(x * x), [x])
    assert x.data.dtype == np.float32


def test_dropout_modes(rng):
    x = dc.Tensor(np.ones((50, 50), dtype=np.float32), requires_grad=True)
    out_eval = dc.dropout(x, 0.9, train=False)
    np.testing.assert_array_equal(out_eval.data, x.data)
    out_train = dc.dropout(x, 0.9, rng=np.random.default_rng(0), train=True).data
    kept = out_train != 0
    assert 0.8 < kept.mean() < 0.97
    np.testing.assert_allclose(out_train[kept], 1.0 / 0.9, rtol=1e-6)
    with pytest.raises(ConfigError):
        dc.dropout(x, 1.5, rng=np.random.default_rng(0), train=True)
    with pytest.raises(ConfigError):
        dc.dropout(x, 0.9, rng=None, train=True)


def test_backward_requires_scalar_root(rng):
    x = dc.Tensor(rng.normal(size=(3, 3)).astype(np.float32), requires_grad=True)
    with pytest.raises(ShapeError):
        dc.backward(x * x)
