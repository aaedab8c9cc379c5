"""Run configuration: documented keys, JSON round-trip, validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .encoder import ENCODER_KINDS, EncoderConfig
from .errors import ConfigError
from .globalattn import ORDERS, GlobalAttnConfig
from .pdconv import LocalStackConfig, get_spec
from .tagger import HeadConfig


@dataclass
class Config:
    """Every tunable in one flat, JSON-serializable record.

    Keys: dims (d_h, d_p, d_a, d_head), encoder (encoder_kind, max_len,
    relative_position), local stack (stack, local_residual, folded_conv),
    global attention (global_order, global_residual), head
    (head_hidden_mult, dropout_keep), switches (use_biconsolidation), and
    training (lr, batch_size, epochs, seed, clip_norm, early-stop targets).
    """

    d_h: int = 64
    d_p: int = 16
    d_a: int = 16
    d_head: int = 8
    encoder_kind: str = "bi-recurrent"
    max_len: int = 100
    relative_position: bool = False
    stack: tuple[str, ...] = ("CPDC-OMNI", "APDC-CCW", "RPDC-OMNI", "CNN-2D")
    local_residual: bool = True
    folded_conv: bool = True
    global_order: str = "cs"
    global_residual: bool = True
    head_hidden_mult: int = 2
    dropout_keep: float = 0.9
    use_biconsolidation: bool = True
    lr: float = 1e-3
    batch_size: int = 5
    epochs: int = 200
    seed: int = 0
    clip_norm: float = 5.0
    early_stop_train_f1: float | None = None
    early_stop_dev_f1: float | None = None

    def __post_init__(self):
        self.stack = tuple(self.stack)
        for name in self.stack:
            get_spec(name)  # raises ConfigError on unknown names
        if self.encoder_kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.encoder_kind!r}")
        if self.global_order not in ORDERS:
            raise ConfigError(f"unknown global order {self.global_order!r}")
        if self.lr <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("lr, epochs and batch_size must be positive")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")

    # Sub-configs consumed by the individual modules.
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(d_h=self.d_h, d_p=self.d_p, d_a=self.d_a, d_head=self.d_head,
                             max_len=self.max_len, kind=self.encoder_kind,
                             relative_position=self.relative_position)

    def stack_config(self) -> LocalStackConfig:
        return LocalStackConfig(spec_names=self.stack, residual=self.local_residual,
                                folded=self.folded_conv)

    def global_config(self) -> GlobalAttnConfig:
        return GlobalAttnConfig(order=self.global_order, residual=self.global_residual)

    def head_config(self) -> HeadConfig:
        return HeadConfig(hidden_mult=self.head_hidden_mult, dropout_keep=self.dropout_keep)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["stack"] = list(self.stack)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {str(path)!r} does not exist")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {str(path)!r} is not valid JSON: {exc}") from None
