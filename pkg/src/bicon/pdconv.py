"""Local consolidation: difference-convolution blocks over the pair grid.

Each kernel spec lists pixel pairs (offset_a, offset_b); a unit of output is
the weighted sum of differences value(p + offset_a) - value(p + offset_b)
with one learned weight per pair per (output, input) channel. Folding the
+w/-w contributions into an ordinary dense kernel gives an exactly
equivalent fast path through conv2d.

Borders read clamped (edge-replicated) values so that spatially constant
input yields exactly zero pre-norm output for every pure-difference spec,
and so that the folded path matches the pairwise definition at every cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ConfigError, ShapeError

Offset = tuple[int, int]
Pair = tuple[Offset, Offset]

# Clockwise ring of the eight 3x3 neighbors, starting at the top-left corner.
_RING: tuple[Offset, ...] = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))

_CENTER: Offset = (0, 0)


@dataclass(frozen=True)
class PdcKernelSpec:
    """A named difference-convolution stencil.

    `pairs` is None for the vanilla spec, which owns one ordinary weight per
    kernel cell instead of per-pair difference weights.
    """

    name: str
    kernel_size: int
    pairs: tuple[Pair, ...] | None

    def __post_init__(self):
        if self.kernel_size % 2 == 0 or self.kernel_size < 3:
            raise ConfigError(f"kernel size must be odd and >= 3, got {self.kernel_size}")
        if self.pairs is not None:
            r = self.kernel_size // 2
            for a, b in self.pairs:
                for off in (a, b):
                    if max(abs(off[0]), abs(off[1])) > r:
                        raise ConfigError(f"offset {off} falls outside the {self.kernel_size}x"
                                          f"{self.kernel_size} window of spec {self.name!r}")

    @property
    def vanilla(self) -> bool:
        return self.pairs is None

    @property
    def n_weights(self) -> int:
        """Weight slots per (output, input) channel."""
        if self.vanilla:
            return self.kernel_size * self.kernel_size
        return len(self.pairs)


def _ring_pairs(ring: Sequence[Offset]) -> tuple[Pair, ...]:
    return tuple((ring[t], ring[(t + 1) % len(ring)]) for t in range(len(ring)))


def _radial_inner(off: Offset) -> Offset:
    """Nearest inner-ring cell along the ray to center, rounding half-steps outward."""
    def half(v: int) -> int:
        return int(np.sign(v)) * int(np.ceil(abs(v) / 2.0))
    return (half(off[0]), half(off[1]))


def _outer_ring(radius: int) -> tuple[Offset, ...]:
    cells = [(r, c) for r in range(-radius, radius + 1) for c in range(-radius, radius + 1)
             if max(abs(r), abs(c)) == radius]
    return tuple(sorted(cells))


def _build_specs() -> dict[str, PdcKernelSpec]:
    cross = ((-1, 0), (1, 0), (0, -1), (0, 1))
    diag = ((-1, -1), (-1, 1), (1, -1), (1, 1))
    specs = [
        PdcKernelSpec("C_xy", 3, tuple((o, _CENTER) for o in cross)),
        PdcKernelSpec("C_d", 3, tuple((o, _CENTER) for o in diag)),
        PdcKernelSpec("C", 3, tuple((o, _CENTER) for o in sorted(cross + diag))),
        PdcKernelSpec("A", 3, _ring_pairs(_RING)),
        PdcKernelSpec("A_r", 3, _ring_pairs(tuple(reversed(_RING)))),
        PdcKernelSpec("R_xy", 5, (((0, 2), (0, 1)), ((0, -2), (0, -1)), ((2, 0), (1, 0)), ((-2, 0), (-1, 0)))),
        PdcKernelSpec("R_d", 5, (((2, 2), (1, 1)), ((2, -2), (1, -1)), ((-2, 2), (-1, 1)), ((-2, -2), (-1, -1)))),
        PdcKernelSpec("R", 5, tuple((o, _radial_inner(o)) for o in _outer_ring(2))),
        PdcKernelSpec("V", 3, None),
    ]
    return {s.name: s for s in specs}


SPECS: dict[str, PdcKernelSpec] = _build_specs()

# Config-file spelling of each spec.
CONFIG_NAMES: dict[str, str] = {
    "CPDC-XY": "C_xy",
    "CPDC-DG": "C_d",
    "CPDC-OMNI": "C",
    "APDC-CW": "A",
    "APDC-CCW": "A_r",
    "RPDC-XY": "R_xy",
    "RPDC-DG": "R_d",
    "RPDC-OMNI": "R",
    "CNN-2D": "V",
}
SHORT_TO_CONFIG = {v: k for k, v in CONFIG_NAMES.items()}


def get_spec(name: str) -> PdcKernelSpec:
    """Resolve a spec by short name or config-file name."""
    key = CONFIG_NAMES.get(name, name)
    try:
        return SPECS[key]
    except KeyError:
        raise ConfigError(f"unknown convolution spec {name!r}; choose from "
                          f"{sorted(SPECS) + sorted(CONFIG_NAMES)}") from None


def _check_weights(weights: Tensor, spec: PdcKernelSpec) -> None:
    if weights.ndim != 3 or weights.shape[2] != spec.n_weights:
        raise ShapeError(f"spec {spec.name!r} expects weights [C_out, C_in, {spec.n_weights}], "
                         f"got {weights.shape}")


def to_equivalent_kernel(weights: Tensor, spec: PdcKernelSpec) -> Tensor:
    """Fold per-pair difference weights into a dense [C_out, C_in, k, k] kernel.

    Each pair contributes +w at offset_a and -w at offset_b; overlapping
    contributions accumulate. Differentiable in the weights.
    """
    _check_weights(weights, spec)
    c_out, c_in, m = weights.shape
    k = spec.kernel_size
    r = k // 2
    if spec.vanilla:
        return dc.reshape(weights, (c_out, c_in, k, k))
    out_data = np.zeros((c_out, c_in, k, k), dtype=weights.data.dtype)
    for t, (a, b) in enumerate(spec.pairs):
        out_data[:, :, r + a[0], r + a[1]] += weights.data[:, :, t]
        out_data[:, :, r + b[0], r + b[1]] -= weights.data[:, :, t]

    def bw(g):
        gw = np.stack([g[:, :, r + a[0], r + a[1]] - g[:, :, r + b[0], r + b[1]]
                       for a, b in spec.pairs], axis=-1)
        dc.accumulate_grad(weights, gw)

    return Tensor(out_data, parents=(weights,), backward_fn=bw, name="to_equivalent_kernel")


def pdc_forward(x: Tensor, spec: PdcKernelSpec, weights: Tensor) -> Tensor:
    """Direct pairwise-difference convolution of [C_in, H, W] -> [C_out, H, W].

    Border reads are edge-clamped. This path evaluates the pair sums
    explicitly; conv2d(to_equivalent_kernel(...)) is the folded equivalent.
    """
    _check_weights(weights, spec)
    if x.ndim != 3:
        raise ShapeError(f"pdc_forward expects [C_in, H, W], got {x.shape}")
    c_out, c_in, m = weights.shape
    if x.shape[0] != c_in:
        raise ShapeError(f"pdc_forward channel mismatch: input {x.shape} vs weights {weights.shape}")
    if spec.vanilla:
        return dc.conv2d(x, to_equivalent_kernel(weights, spec), pad_mode="edge")
    k = spec.kernel_size
    r = k // 2
    _, h, w = x.shape
    xp = dc._pad2d(x.data, r, "edge")

    def view(off: Offset) -> np.ndarray:
        return xp[:, r + off[0]: r + off[0] + h, r + off[1]: r + off[1] + w]

    diffs = np.stack([view(a) - view(b) for a, b in spec.pairs])  # [m, C_in, H, W]
    out_data = np.einsum("ocm,mchw->ohw", weights.data, diffs)

    def bw(g):
        if weights.requires_grad:
            gw = np.einsum("ohw,mchw->ocm", g.astype(np.float64), diffs.astype(np.float64))
            dc.accumulate_grad(weights, gw)
        if x.requires_grad:
            gd = np.einsum("ocm,ohw->mchw", weights.data, g)
            gxp = np.zeros_like(xp)
            for t, (a, b) in enumerate(spec.pairs):
                gxp[:, r + a[0]: r + a[0] + h, r + a[1]: r + a[1] + w] += gd[t]
                gxp[:, r + b[0]: r + b[0] + h, r + b[1]: r + b[1] + w] -= gd[t]
            dc.accumulate_grad(x, dc._unpad_adjoint(gxp, r, "edge"))

    return Tensor(out_data, parents=(x, weights), backward_fn=bw, name="pdc_forward")


@dataclass
class ConvBlockConfig:
    """One consolidation block: a difference conv, layer norm, optional residual."""

    spec_name: str
    residual: bool = True
    folded: bool = True  # route through to_equivalent_kernel + conv2d

    @property
    def spec(self) -> PdcKernelSpec:
        return get_spec(self.spec_name)


def init_block_params(spec: PdcKernelSpec, channels: int, rng: np.random.Generator,
                      prefix: str) -> dict[str, Tensor]:
    """Weights plus layer-norm affine for one block."""
    fan = channels * spec.n_weights
    limit = np.sqrt(6.0 / (fan + channels))
    w = rng.uniform(-limit, limit, size=(channels, channels, spec.n_weights)).astype(np.float32)
    return {
        f"{prefix}.w": Tensor(w, requires_grad=True, name=f"{prefix}.w"),
        f"{prefix}.ln.g": Tensor(np.ones(channels, dtype=np.float32), requires_grad=True,
                                 name=f"{prefix}.ln.g"),
        f"{prefix}.ln.b": Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True,
                                 name=f"{prefix}.ln.b"),
    }


def conv_block(grid: Tensor, cfg: ConvBlockConfig, params: dict[str, Tensor],
               prefix: str) -> Tensor:
    """layer_norm(difference_conv(grid)) with an optional residual add.

    `grid` is [N, N, C]; the conv runs channels-first internally.
    """
    if grid.ndim != 3 or grid.shape[0] != grid.shape[1]:
        raise ShapeError(f"conv_block expects a square [N, N, C] grid, got {grid.shape}")
    spec = cfg.spec
    weights = params[f"{prefix}.w"]
    xc = dc.transpose(grid, (2, 0, 1))
    if cfg.folded:
        y = dc.conv2d(xc, to_equivalent_kernel(weights, spec), pad_mode="edge")
    else:
        y = pdc_forward(xc, spec, weights)
    yg = dc.transpose(y, (1, 2, 0))
    out = dc.layer_norm(yg, params[f"{prefix}.ln.g"], params[f"{prefix}.ln.b"])
    if cfg.residual:
        out = dc.add(out, grid)
    return out


@dataclass
class LocalStackConfig:
    """Ordered conv specs for the local consolidation stack."""

    spec_names: tuple[str, ...] = ("C", "A_r", "R", "V")
    residual: bool = True
    folded: bool = True

    def blocks(self) -> list[ConvBlockConfig]:
        return [ConvBlockConfig(n, self.residual, self.folded) for n in self.spec_names]


def init_stack_params(cfg: LocalStackConfig, channels: int,
                      rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    for i, name in enumerate(cfg.spec_names):
        params.update(init_block_params(get_spec(name), channels, rng, prefix=f"local.{i}"))
    return params


def local_consolidate(grid: Tensor, cfg: LocalStackConfig, params: dict[str, Tensor],
                      record: dict[str, Tensor] | None = None) -> Tensor:
    """Run the configured block stack; optionally record each block's output."""
    out = grid
    for i, block_cfg in enumerate(cfg.blocks()):
        out = conv_block(out, block_cfg, params, prefix=f"local.{i}")
        if record is not None:
            record[f"block{i + 1}"] = out
    return out
