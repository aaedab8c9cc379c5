"""Minimal reverse-mode autodiff over dense numpy arrays.

Parameters and activations default to float32; reductions accumulate in
float64 and cast back to the operand dtype, so the same graph code runs in
float64 when callers upcast (grad_check does). Each operation returns a new
Tensor wired to its parents with a backward closure; `backward` walks the
recorded graph exactly once in reverse topological order and accumulates
gradients on every tensor that requires them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError

DEFAULT_DTYPE = np.float32

Array = np.ndarray


def _as_array(data, dtype=None) -> Array:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if not np.issubdtype(arr.dtype, np.floating):
        return arr.astype(DEFAULT_DTYPE)
    return arr


class Tensor:
    """Graph node: a dense array, an optional gradient, and its provenance."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 parents: tuple["Tensor", ...] = (), backward_fn=None, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self.parents = parents
        self.backward_fn: Callable[[Array], None] | None = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, dtype={self.data.dtype})"

    # Thin operator sugar; the module-level functions are the primary API.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def accumulate_grad(t: Tensor, g: Array) -> None:
    """Add `g` into t.grad (copy on first write so callers may pass views)."""
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    if g.shape != t.data.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {t.data.shape}")
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum `g` down to `shape` (the adjoint of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0, dtype=np.float64)
    for ax, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=ax, keepdims=True, dtype=np.float64)
    return g


@dataclass
class Graph:
    """Recorded operations in topological order plus the leaf registry."""

    topo: list[Tensor] = field(default_factory=list)
    leaves: list[Tensor] = field(default_factory=list)


def trace(root: Tensor) -> Graph:
    """Collect the subgraph reachable from `root` in topological order."""
    topo: list[Tensor] = []
    leaves: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        if not node.parents:
            leaves.append(node)
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return Graph(topo=topo, leaves=leaves)


def backward(root: Tensor, graph: Graph | None = None) -> Graph:
    """Accumulate gradients of `root` w.r.t. every requires_grad ancestor.

    `root` must be scalar-shaped. Each recorded op's backward closure runs
    exactly once, in reverse topological order.
    """
    if root.data.size != 1:
        raise ShapeError(f"backward requires a scalar root, got shape {root.data.shape}")
    g = graph or trace(root)
    root.grad = np.ones_like(root.data)
    for node in reversed(g.topo):
        if node.backward_fn is None or not node.requires_grad:
            continue
        if node.grad is None:
            continue  # not on a path that influences the root
        node.backward_fn(node.grad)
    return g


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def bw(g: Array) -> None:
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward_fn=bw, name="add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data - b.data

    def bw(g: Array) -> None:
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(-g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward_fn=bw, name="sub")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def bw(g: Array) -> None:
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward_fn=bw, name="mul")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out_data = a.data * s

    def bw(g: Array) -> None:
        accumulate_grad(a, g * s)

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="scale")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def bw(g: Array) -> None:
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward_fn=bw, name="matmul")


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    out_data = a.data.reshape(shape)

    def bw(g: Array) -> None:
        accumulate_grad(a, g.reshape(a.data.shape))

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="reshape")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(x) for x in axes)
    inv = tuple(int(x) for x in np.argsort(axes))
    out_data = a.data.transpose(axes)

    def bw(g: Array) -> None:
        accumulate_grad(a, g.transpose(inv))

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="transpose")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty tensor list")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis if axis >= 0 else out_data.ndim + axis
    sizes = [t.data.shape[ax] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g: Array) -> None:
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(int(lo), int(hi))
                accumulate_grad(t, g[tuple(idx)])

    return Tensor(out_data, parents=tuple(tensors), backward_fn=bw, name="concat")


def slice_axis0(a: Tensor, start: int, stop: int) -> Tensor:
    out_data = a.data[start:stop]

    def bw(g: Array) -> None:
        full = np.zeros_like(a.data)
        full[start:stop] = g
        accumulate_grad(a, full)

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="slice_axis0")


# ---------------------------------------------------------------------------
# reductions and pooling


def sum_all(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum(dtype=np.float64), dtype=a.data.dtype)

    def bw(g: Array) -> None:
        accumulate_grad(a, np.broadcast_to(g, a.data.shape))

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="sum")


def avg_pool(a: Tensor, axes: Sequence[int], keepdims: bool = False) -> Tensor:
    """Mean over the given axis set (float64 accumulation)."""
    axes = tuple(sorted(ax % a.ndim for ax in axes))
    count = int(np.prod([a.data.shape[ax] for ax in axes]))
    out_data = a.data.mean(axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def bw(g: Array) -> None:
        ge = g if keepdims else np.expand_dims(g, axes)
        accumulate_grad(a, np.broadcast_to(ge, a.data.shape) / count)

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="avg_pool")


def max_pool(a: Tensor, axes: Sequence[int], keepdims: bool = False) -> Tensor:
    """Max over the given axis set; ties split the gradient equally."""
    axes = tuple(sorted(ax % a.ndim for ax in axes))
    kept = a.data.max(axis=axes, keepdims=True)
    out_data = kept if keepdims else np.squeeze(kept, axis=axes)

    def bw(g: Array) -> None:
        mask = (a.data == kept)
        counts = mask.sum(axis=axes, keepdims=True)
        ge = g if keepdims else np.expand_dims(g, axes)
        accumulate_grad(a, mask * (np.broadcast_to(ge, a.data.shape) / counts))

    return Tensor(out_data.copy(), parents=(a,), backward_fn=bw, name="max_pool")


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def bw(g: Array) -> None:
        accumulate_grad(a, g * (a.data > 0))

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="relu")


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    alpha = float(alpha)
    neg = alpha * np.expm1(np.minimum(a.data, 0))
    out_data = np.where(a.data > 0, a.data, neg).astype(a.data.dtype)

    def bw(g: Array) -> None:
        accumulate_grad(a, g * np.where(a.data > 0, 1.0, neg + alpha).astype(a.data.dtype))

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="elu")


def sigmoid(a: Tensor) -> Tensor:
    # Stable two-sided form.
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)

    def bw(g: Array) -> None:
        accumulate_grad(a, g * out_data * (1.0 - out_data))

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="sigmoid")


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bw(g: Array) -> None:
        accumulate_grad(a, g * (1.0 - out_data * out_data))

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="tanh")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out_data = (ex / ex.sum(axis=axis, keepdims=True, dtype=np.float64)).astype(x.dtype)

    def bw(g: Array) -> None:
        dot = (g * out_data).sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)
        accumulate_grad(a, out_data * (g - dot))

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="softmax")


# ---------------------------------------------------------------------------
# regularization and normalization


def dropout(a: Tensor, keep_prob: float, rng: np.random.Generator | int | None = None,
            train: bool = True) -> Tensor:
    """Inverted dropout. Identity when train=False or keep_prob == 1."""
    keep_prob = float(keep_prob)
    if not 0.0 < keep_prob <= 1.0:
        raise ConfigError(f"dropout keep probability {keep_prob} outside (0, 1]")
    if not train or keep_prob == 1.0:
        return a
    if rng is None:
        raise ConfigError("dropout in train mode requires an RNG (seed or Generator)")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    mask = (rng.random(a.data.shape) < keep_prob).astype(a.data.dtype) / keep_prob
    out_data = a.data * mask

    def bw(g: Array) -> None:
        accumulate_grad(a, g * mask)

    return Tensor(out_data, parents=(a,), backward_fn=bw, name="dropout")


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis with affine gain/bias."""
    gain, bias = _wrap(gain), _wrap(bias)
    d = a.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} do not match feature dim ({d},)")
    x64 = a.data.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    xc = x64 - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(a.data.dtype)
    out_data = xhat * gain.data + bias.data

    def bw(g: Array) -> None:
        if gain.requires_grad:
            accumulate_grad(gain, (g * xhat).reshape(-1, d).sum(axis=0, dtype=np.float64))
        if bias.requires_grad:
            accumulate_grad(bias, g.reshape(-1, d).sum(axis=0, dtype=np.float64))
        if a.requires_grad:
            gx = (g * gain.data).astype(np.float64)
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            accumulate_grad(a, ((gx - m1 - xhat * m2) * inv).astype(a.data.dtype))

    return Tensor(out_data, parents=(a, gain, bias), backward_fn=bw, name="layer_norm")


# ---------------------------------------------------------------------------
# table lookup


def embedding(table: Tensor, ids) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding ids must be integers, got dtype {ids.dtype}")
    n_rows = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n_rows):
        raise ConfigError(
            f"embedding index out of range: ids span [{ids.min()}, {ids.max()}], table has {n_rows} rows")
    out_data = table.data[ids]

    def bw(g: Array) -> None:
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        accumulate_grad(table, gt)

    return Tensor(out_data, parents=(table,), backward_fn=bw, name="embedding")


# ---------------------------------------------------------------------------
# 2D convolution (cross-correlation)


def _pad2d(x: Array, p: int, mode: str) -> Array:
    if p == 0:
        return x
    np_mode = {"zeros": "constant", "edge": "edge"}.get(mode)
    if np_mode is None:
        raise ConfigError(f"unknown pad mode {mode!r} (use 'zeros' or 'edge')")
    return np.pad(x, ((0, 0), (p, p), (p, p)), mode=np_mode)


def _unpad_adjoint(gxp: Array, p: int, mode: str) -> Array:
    """Adjoint of _pad2d: fold padded-cell gradients back onto the source."""
    if p == 0:
        return gxp
    if mode == "zeros":
        return gxp[:, p:-p, p:-p]
    # edge mode: each padded cell replicates its clamped source cell
    g = gxp[:, p:-p, p:-p].copy()
    g[:, 0, :] += gxp[:, :p, p:-p].sum(axis=1)
    g[:, -1, :] += gxp[:, -p:, p:-p].sum(axis=1)
    g[:, :, 0] += gxp[:, p:-p, :p].sum(axis=2)
    g[:, :, -1] += gxp[:, p:-p, -p:].sum(axis=2)
    g[:, 0, 0] += gxp[:, :p, :p].sum(axis=(1, 2))
    g[:, 0, -1] += gxp[:, :p, -p:].sum(axis=(1, 2))
    g[:, -1, 0] += gxp[:, -p:, :p].sum(axis=(1, 2))
    g[:, -1, -1] += gxp[:, -p:, -p:].sum(axis=(1, 2))
    return g


def conv2d(x: Tensor, kernel: Tensor, padding: int | None = None, pad_mode: str = "zeros") -> Tensor:
    """2D cross-correlation of [C_in,H,W] with [C_out,C_in,k,k], same-size output.

    `padding` defaults to (k-1)//2 which preserves H and W for odd k.
    """
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects x [C,H,W] and kernel [O,C,k,k], got {x.data.shape} and {kernel.data.shape}")
    c_out, c_in, kh, kw = kernel.data.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigError(f"conv2d kernel must be square with odd size, got {kh}x{kw}")
    if x.data.shape[0] != c_in:
        raise ShapeError(f"conv2d channel mismatch: input {x.data.shape} vs kernel {kernel.data.shape}")
    p = (kh - 1) // 2 if padding is None else int(padding)
    _, h, w = x.data.shape
    xp = _pad2d(x.data, p, pad_mode)
    ho, wo = xp.shape[1] - kh + 1, xp.shape[2] - kw + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d output would be empty for input {x.data.shape} and kernel {kh}x{kw}")
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c_in * kh * kw)
    km = kernel.data.reshape(c_out, c_in * kh * kw)
    out_data = (cols @ km.T).T.reshape(c_out, ho, wo)

    def bw(g: Array) -> None:
        g2 = g.reshape(c_out, ho * wo)
        if kernel.requires_grad:
            accumulate_grad(kernel, (g2 @ cols).reshape(kernel.data.shape))
        if x.requires_grad:
            gcols = (g2.T @ km).reshape(ho, wo, c_in, kh, kw)
            gxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    gxp[:, di:di + ho, dj:dj + wo] += gcols[:, :, :, di, dj].transpose(2, 0, 1)
            accumulate_grad(x, _unpad_adjoint(gxp, p, pad_mode))

    return Tensor(out_data, parents=(x, kernel), backward_fn=bw, name="conv2d")


# ---------------------------------------------------------------------------
# classification loss


def cross_entropy(logits: Tensor, labels, mask=None) -> Tensor:
    """Mean cross-entropy over the last axis, restricted to masked-in cells.

    `labels` holds integer class ids shaped like logits minus the class
    axis; `mask` (same shape as labels, optional) selects the cells that
    contribute, and the mean divides by the number of selected cells.
    """
    labels = np.asarray(labels)
    if labels.shape != logits.data.shape[:-1]:
        raise ShapeError(f"labels shape {labels.shape} does not match logits {logits.data.shape}")
    n_classes = logits.data.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ConfigError(f"label id out of range [0, {n_classes})")
    if mask is None:
        w = np.ones(labels.shape, dtype=np.float64)
    else:
        w = np.asarray(mask, dtype=np.float64)
        if w.shape != labels.shape:
            raise ShapeError(f"mask shape {w.shape} does not match labels {labels.shape}")
    total = w.sum()
    if total <= 0:
        raise ConfigError("cross_entropy mask selects no cells")

    x = logits.data.astype(np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    out_data = np.asarray(-(picked * w).sum() / total, dtype=logits.data.dtype)

    def bw(g: Array) -> None:
        p = np.exp(logp)
        p[tuple(np.indices(labels.shape)) + (labels,)] -= 1.0
        gl = (p * (w / total)[..., None] * float(g)).astype(logits.data.dtype)
        accumulate_grad(logits, gl)

    return Tensor(out_data, parents=(logits,), backward_fn=bw, name="cross_entropy")


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    """Outcome of an analytic-vs-finite-difference comparison."""

    max_rel_err: float
    checked: int
    flagged: list[tuple[str, tuple[int, ...], str]]
    worst: tuple[str, tuple[int, ...], float, float] | None

    def ok(self, tol: float) -> bool:
        return self.max_rel_err < tol


def grad_check(f: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = 1e-3,
               sample: int | None = None, rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients of scalar f() against central finite differences.

    Inputs are upcast to float64 in place for the duration of the check and
    restored afterwards; f must be deterministic (dropout disabled).
    Coordinates whose finite-difference estimates at step and step/2 disagree
    beyond smooth-function expectations are flagged (nondifferentiable
    boundary) and excluded from the reported max relative error.
    """
    step = float(step)
    saved = [(t.data, t.grad) for t in inputs]
    for t in inputs:
        t.data = t.data.astype(np.float64)
        t.grad = None
    try:
        base = f()
        if base.data.size != 1:
            raise ShapeError(f"grad_check expects a scalar function, got shape {base.data.shape}")
        again = f()
        if not np.allclose(base.data, again.data, rtol=0, atol=0):
            raise ConfigError("grad_check requires a deterministic function (disable dropout)")
        backward(base)
        f0 = float(base.data)
        if not np.isfinite(f0):
            raise FloatingPointError("non-finite loss in grad_check")
        analytic = []
        for t in inputs:
            if t.grad is None:
                analytic.append(np.zeros_like(t.data))
            else:
                if not np.all(np.isfinite(t.grad)):
                    raise FloatingPointError(f"non-finite gradient for tensor {t.name or '<unnamed>'}")
                analytic.append(t.grad.copy())

        def eval_at() -> float:
            return float(f().data)

        max_rel = 0.0
        worst = None
        flagged: list[tuple[str, tuple[int, ...], str]] = []
        checked = 0
        for t, a in zip(inputs, analytic):
            name = t.name or "<unnamed>"
            flat = t.data.reshape(-1)
            n = flat.size
            if sample is not None and sample < n:
                if rng is None:
                    rng = np.random.default_rng(0)
                coords = rng.choice(n, size=sample, replace=False)
            else:
                coords = range(n)
            for c in coords:
                orig = flat[c]
                fd = []
                sided = []
                for h in (step, step / 2.0):
                    flat[c] = orig + h
                    f_plus = eval_at()
                    flat[c] = orig - h
                    f_minus = eval_at()
                    flat[c] = orig
                    fd.append((f_plus - f_minus) / (2.0 * h))
                    sided.append(((f_plus - f0) / h, (f0 - f_minus) / h))
                fd1, fd2 = fd
                checked += 1
                idx = tuple(int(v) for v in np.unravel_index(c, t.data.shape))
                if not (np.isfinite(fd1) and np.isfinite(fd2)):
                    raise FloatingPointError(f"non-finite finite difference at {name}{idx}")
                if abs(fd1 - fd2) > 0.01 * step * max(1.0, abs(fd1), abs(fd2)):
                    flagged.append((name, idx, "finite-difference inconsistency (kink)"))
                    continue
                # One-sided slopes disagreeing beyond curvature noise mean the
                # coordinate sits on a nondifferentiable boundary; central
                # differences average across it and report a bogus slope.
                fwd, bwd = sided[0]
                if abs(fwd - bwd) > 0.02 * max(1.0, abs(fd1)):
                    flagged.append((name, idx, "one-sided slope disagreement (kink)"))
                    continue
                av = float(a.reshape(-1)[c])
                denom = max(abs(av), abs(fd2))
                rel = 0.0 if denom < 1e-8 else abs(av - fd2) / denom
                if rel > max_rel:
                    max_rel = rel
                    worst = (name, idx, av, fd2)
        return GradCheckReport(max_rel_err=max_rel, checked=checked, flagged=flagged, worst=worst)
    finally:
        for t, (data, grad) in zip(inputs, saved):
            t.data = data
            t.grad = grad
