"""Global consolidation: channel and spatial attention over the pair grid.

Channel attention squeezes the grid spatially (average and max), pushes both
summaries through one shared C x C matrix, and gates channels with the
sigmoid of the sum. Spatial attention stacks the channel-average and
channel-max maps and scores each cell with a single 7x7 convolution. The two
gates compose in series (either order) or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ConfigError, ShapeError

ORDERS = ("cs", "sc", "par")

SPATIAL_KERNEL = 7


@dataclass
class GlobalAttnConfig:
    order: str = "cs"
    residual: bool = True

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ConfigError(f"unknown global attention order {self.order!r}; choose from {ORDERS}")


def init_params(channels: int, rng: np.random.Generator) -> dict[str, Tensor]:
    limit = np.sqrt(6.0 / (2 * channels))
    w_c = rng.uniform(-limit, limit, size=(channels, channels)).astype(np.float32)
    k = SPATIAL_KERNEL
    limit_s = np.sqrt(6.0 / (2 * k * k + 1))
    f_s = rng.uniform(-limit_s, limit_s, size=(1, 2, k, k)).astype(np.float32)
    return {
        "global.w_c": Tensor(w_c, requires_grad=True, name="global.w_c"),
        "global.f_s": Tensor(f_s, requires_grad=True, name="global.f_s"),
    }


def channel_attention(u: Tensor, w_c: Tensor) -> Tensor:
    """Per-channel gate in (0, 1): sigmoid(avg_pool(U) W_c + max_pool(U) W_c), shape [C].

    One W_c is shared by both pooled summaries; no bias, no reduction.
    """
    if u.ndim != 3:
        raise ShapeError(f"channel_attention expects [N, N, C], got {u.shape}")
    c = u.shape[2]
    if w_c.shape != (c, c):
        raise ShapeError(f"channel weight {w_c.shape} does not match channel count {c}")
    avg = dc.reshape(dc.avg_pool(u, axes=(0, 1)), (1, c))
    mx = dc.reshape(dc.max_pool(u, axes=(0, 1)), (1, c))
    gate = dc.sigmoid(dc.add(dc.matmul(avg, w_c), dc.matmul(mx, w_c)))
    return dc.reshape(gate, (c,))


def spatial_attention(u: Tensor, f_s: Tensor) -> Tensor:
    """Per-cell gate in (0, 1): sigmoid(7x7 conv over [channel-avg, channel-max]), shape [N, N]."""
    if u.ndim != 3:
        raise ShapeError(f"spatial_attention expects [N, N, C], got {u.shape}")
    if f_s.shape != (1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL):
        raise ShapeError(f"spatial kernel must be [1, 2, {SPATIAL_KERNEL}, {SPATIAL_KERNEL}], got {f_s.shape}")
    n = u.shape[0]
    avg = dc.avg_pool(u, axes=(2,), keepdims=True)
    mx = dc.max_pool(u, axes=(2,), keepdims=True)
    stacked = dc.transpose(dc.concat([avg, mx], axis=-1), (2, 0, 1))  # [2, N, N]
    scores = dc.conv2d(stacked, f_s, padding=(SPATIAL_KERNEL - 1) // 2, pad_mode="zeros")
    return dc.reshape(dc.sigmoid(scores), (n, n))


def global_consolidate(u: Tensor, params: dict[str, Tensor], cfg: GlobalAttnConfig) -> Tensor:
    """Apply the configured gate composition (+ residual) to the grid [N, N, C]."""
    w_c, f_s = params["global.w_c"], params["global.f_s"]
    n = u.shape[0]
    if cfg.order == "cs":
        u1 = dc.mul(u, channel_attention(u, w_c))
        q_s = dc.reshape(spatial_attention(u1, f_s), (n, n, 1))
        out = dc.mul(u1, q_s)
    elif cfg.order == "sc":
        q_s = dc.reshape(spatial_attention(u, f_s), (n, n, 1))
        u1 = dc.mul(u, q_s)
        out = dc.mul(u1, channel_attention(u1, w_c))
    else:  # par: average of the two independently gated grids
        by_c = dc.mul(u, channel_attention(u, w_c))
        by_s = dc.mul(u, dc.reshape(spatial_attention(u, f_s), (n, n, 1)))
        out = dc.scale(dc.add(by_c, by_s), 0.5)
    if cfg.residual:
        out = dc.add(out, u)
    return out
