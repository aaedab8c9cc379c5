"""Per-relation tag tables: scoring head, gold-table construction, loss.

Every (token i, token j, relation r) cell carries one of four labels:
0 "N/A", 1 "B-B" (subject begin, object begin), 2 "B-E" (subject begin,
object end), 3 "E-E" (subject end, object end). A triple with subject span
[sb, se] and object span [ob, oe] marks (sb, ob) B-B, (sb, oe) B-E and
(se, oe) E-E in its relation's table. When spans collide in one cell the
anchor label wins: B-E over B-B over E-E.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ConfigError, DataError, ShapeError

LABELS = ("N/A", "B-B", "B-E", "E-E")
NA, BB, BE, EE = 0, 1, 2, 3
N_LABELS = len(LABELS)

# Collision precedence: B-E anchors both splices, so it must survive.
_PRECEDENCE = {BE: 3, BB: 2, EE: 1}


@dataclass(frozen=True)
class RelSchema:
    """Ordered relation names; position = relation id."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise ConfigError("relation schema must name at least one relation")
        if len(set(self.names)) != len(self.names):
            raise ConfigError("relation schema contains duplicate names")

    @property
    def k(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown relation {name!r}") from None


@dataclass
class TagTable:
    """Dense [N, N, K] grid of label ids (int8)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
            raise ShapeError(f"tag table must be [N, N, K], got {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() >= N_LABELS):
            raise DataError("tag table contains out-of-range label ids")
        self.data = arr.astype(np.int8)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[2]

    def signature(self) -> bytes:
        """Canonical byte form (used to detect colliding gold placements)."""
        return self.data.tobytes()


@dataclass
class HeadConfig:
    """Two-layer scoring head over fused cells."""

    hidden_mult: int = 2
    dropout_keep: float = 0.9

    def __post_init__(self):
        if self.hidden_mult <= 0:
            raise ConfigError(f"hidden_mult must be positive, got {self.hidden_mult}")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigError(f"dropout_keep {self.dropout_keep} outside (0, 1]")


def init_params(d_h: int, k_relations: int, cfg: HeadConfig,
                rng: np.random.Generator) -> dict[str, Tensor]:
    d = cfg.hidden_mult * d_h
    limit1 = np.sqrt(6.0 / (d_h + d))
    limit2 = np.sqrt(6.0 / (d + k_relations * N_LABELS))
    return {
        "head.w": Tensor(rng.uniform(-limit1, limit1, size=(d_h, d)).astype(np.float32),
                         requires_grad=True, name="head.w"),
        "head.b": Tensor(np.zeros(d, dtype=np.float32), requires_grad=True, name="head.b"),
        "head.w_r": Tensor(rng.uniform(-limit2, limit2, size=(d, k_relations * N_LABELS)).astype(np.float32),
                           requires_grad=True, name="head.w_r"),
        "head.b_r": Tensor(np.zeros(k_relations * N_LABELS, dtype=np.float32),
                           requires_grad=True, name="head.b_r"),
    }


def score_tables(t_so: Tensor, params: dict[str, Tensor], k_relations: int, cfg: HeadConfig,
                 train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Score every cell for every relation: [N, N, K, 4] logits.

    Dropout applies to the hidden pre-activation during training only.
    """
    if t_so.ndim != 3 or t_so.shape[0] != t_so.shape[1]:
        raise ShapeError(f"score_tables expects [N, N, D], got {t_so.shape}")
    n, _, d_h = t_so.shape
    if params["head.w"].shape[0] != d_h:
        raise ShapeError(f"head expects feature dim {params['head.w'].shape[0]}, grid has {d_h}")
    flat = dc.reshape(t_so, (n * n, d_h))
    hidden = dc.add(dc.matmul(flat, params["head.w"]), params["head.b"])
    hidden = dc.relu(dc.dropout(hidden, cfg.dropout_keep, rng=rng, train=train))
    logits = dc.add(dc.matmul(hidden, params["head.w_r"]), params["head.b_r"])
    return dc.reshape(logits, (n, n, k_relations, N_LABELS))


def build_gold_table(triples: Iterable, n: int, schema: RelSchema,
                     sid: str | int | None = None) -> TagTable:
    """Write every triple's three marks; collisions resolve by label precedence.

    Triple spans are 1-based inclusive token indices; the table is 0-based.
    """
    table = np.zeros((n, n, schema.k), dtype=np.int8)

    def write(i: int, j: int, r: int, label: int) -> None:
        cur = int(table[i, j, r])
        if cur == NA or _PRECEDENCE[label] > _PRECEDENCE[cur]:
            table[i, j, r] = label

    for t in triples:
        for lo, hi, kind in ((t.sb, t.se, "subject"), (t.ob, t.oe, "object")):
            if not (1 <= lo <= hi <= n):
                raise DataError(
                    f"sentence {sid!r}: {kind} span [{lo}, {hi}] outside a {n}-token sentence")
        r = int(t.rel)
        if not 0 <= r < schema.k:
            raise DataError(f"sentence {sid!r}: relation id {r} outside schema of size {schema.k}")
        write(t.sb - 1, t.ob - 1, r, BB)
        write(t.sb - 1, t.oe - 1, r, BE)
        write(t.se - 1, t.oe - 1, r, EE)
    return TagTable(table)


def loss(logits: Tensor, gold: TagTable, token_mask: np.ndarray | None = None) -> Tensor:
    """Mean cross-entropy over valid (i, k, j) cells.

    `token_mask` (bool [N]) marks real tokens; a cell counts only when both
    its tokens are real. The mean divides by the number of counted cells.
    """
    n, _, k, c = logits.shape
    if gold.data.shape != (n, n, k):
        raise ShapeError(f"gold table {gold.data.shape} does not match logits {logits.shape}")
    if c != N_LABELS:
        raise ShapeError(f"logits last axis must be {N_LABELS}, got {c}")
    mask = None
    if token_mask is not None:
        token_mask = np.asarray(token_mask, dtype=bool)
        if token_mask.shape != (n,):
            raise ShapeError(f"token mask shape {token_mask.shape} does not match N={n}")
        cell = token_mask[:, None] & token_mask[None, :]
        mask = np.repeat(cell[:, :, None], k, axis=2)
    return dc.cross_entropy(logits, gold.data.astype(np.int64), mask=mask)
