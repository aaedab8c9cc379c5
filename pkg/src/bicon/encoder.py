"""Token encoding and 2D pair-grid construction.

A sentence of N tokens becomes an N x N grid whose (i, j) cell fuses three
views of the ordered token pair: the concatenated token vectors, a learned
embedding of the pair's grid position, and a set of bilinear attention
scores. Downstream stages consume the fused grid.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ConfigError, DataError, ShapeError

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

ENCODER_KINDS = ("embedding-bag", "bi-recurrent", "tiny-attention")


@dataclass
class TokenSeq:
    """Tokens plus their character offsets ([start, end) into the raw text)."""

    tokens: list[str]
    char_start: list[int]
    char_end: list[int]

    def __post_init__(self):
        n = len(self.tokens)
        if n == 0:
            raise DataError("empty token sequence")
        if len(self.char_start) != n or len(self.char_end) != n:
            raise DataError("token/offset length mismatch")
        prev = 0
        for s, e in zip(self.char_start, self.char_end):
            if s < prev or e < s:
                raise DataError("token offsets must be nondecreasing")
            prev = s

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(text: str) -> TokenSeq:
    """Whitespace tokenization with punctuation split into separate tokens."""
    tokens, starts, ends = [], [], []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group(0))
        starts.append(m.start())
        ends.append(m.end())
    if not tokens:
        raise DataError("text contains no tokens")
    return TokenSeq(tokens=tokens, char_start=starts, char_end=ends)


class Vocab:
    """Token-to-id table. Ids 0 and 1 are reserved for PAD and UNK."""

    def __init__(self, tokens: list[str]):
        if len(tokens) < 2 or tokens[0] != PAD_TOKEN or tokens[1] != UNK_TOKEN:
            raise ConfigError("vocabulary must start with the PAD and UNK tokens")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ConfigError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, token_iter) -> "Vocab":
        seen = sorted({t for t in token_iter if t not in (PAD_TOKEN, UNK_TOKEN)})
        return cls([PAD_TOKEN, UNK_TOKEN] + seen)

    def encode(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.index.get(t, UNK_ID) for t in tokens], dtype=np.int64)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


@dataclass
class EncoderConfig:
    """Shape and flavor of the token encoder and pair-grid features."""

    d_h: int = 64
    d_p: int = 16
    d_a: int = 16
    d_head: int = 8
    max_len: int = 100
    kind: str = "bi-recurrent"
    relative_position: bool = False

    def __post_init__(self):
        for name in ("d_h", "d_p", "d_a", "d_head", "max_len"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}; choose from {ENCODER_KINDS}")
        if self.kind == "bi-recurrent" and self.d_h % 2 != 0:
            raise ConfigError(f"bi-recurrent encoder needs even d_h, got {self.d_h}")


def _uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def init_params(cfg: EncoderConfig, vocab_size: int, rng: np.random.Generator) -> dict[str, Tensor]:
    """Create all encoder-side parameters, keyed by flat names."""
    if vocab_size < 2:
        raise ConfigError(f"vocab size must be >= 2, got {vocab_size}")
    d_h, d_p, d_a, d_head = cfg.d_h, cfg.d_p, cfg.d_a, cfg.d_head
    p: dict[str, Tensor] = {}

    def param(name: str, arr: np.ndarray) -> None:
        p[name] = Tensor(arr, requires_grad=True, name=name)

    param("enc.emb", (rng.standard_normal((vocab_size, d_h)) * 0.1).astype(np.float32))
    if cfg.kind == "bi-recurrent":
        half = d_h // 2
        for tag in ("fw", "bw"):
            param(f"enc.rnn.{tag}.wx", _uniform(rng, d_h, half, (d_h, half)))
            param(f"enc.rnn.{tag}.wh", _uniform(rng, half, half, (half, half)))
            param(f"enc.rnn.{tag}.b", np.zeros(half, dtype=np.float32))
    elif cfg.kind == "tiny-attention":
        for tag in ("wq", "wk", "wv"):
            param(f"enc.attn1.{tag}", _uniform(rng, d_h, d_h, (d_h, d_h)))
    param("enc.pos_table", (rng.standard_normal((2 * cfg.max_len + 1, d_p)) * 0.1).astype(np.float32))
    param("enc.grid.wq", _uniform(rng, d_h, d_a * d_head, (d_h, d_a * d_head)))
    param("enc.grid.wk", _uniform(rng, d_h, d_a * d_head, (d_h, d_a * d_head)))
    d_cat = d_p + d_a + 2 * d_h
    param("enc.fuse.w_so", _uniform(rng, d_cat, d_h, (d_cat, d_h)))
    param("enc.fuse.b_so", np.zeros(d_h, dtype=np.float32))
    return p


def _run_rnn(emb: Tensor, wx: Tensor, wh: Tensor, b: Tensor, reverse: bool) -> Tensor:
    n = emb.shape[0]
    half = wh.shape[0]
    h_prev = Tensor(np.zeros((1, half), dtype=emb.data.dtype))
    order = range(n - 1, -1, -1) if reverse else range(n)
    outs: list[Tensor] = []
    for t in order:
        x_t = dc.slice_axis0(emb, t, t + 1)
        pre = dc.add(dc.add(dc.matmul(x_t, wx), dc.matmul(h_prev, wh)), b)
        h_prev = dc.tanh(pre)
        outs.append(h_prev)
    if reverse:
        outs.reverse()
    return dc.concat(outs, axis=0)


def encode_tokens(seq: TokenSeq | list[str], vocab: Vocab, params: dict[str, Tensor],
                  cfg: EncoderConfig, sid: str | int | None = None) -> Tensor:
    """Encode a sentence into per-token vectors [N, d_h].

    Sentences longer than max_len are rejected (never silently truncated).
    Unknown tokens map to the UNK id.
    """
    tokens = seq.tokens if isinstance(seq, TokenSeq) else list(seq)
    n = len(tokens)
    if n == 0:
        raise DataError(f"sentence {sid!r}: empty token sequence")
    if n > cfg.max_len:
        raise DataError(
            f"sentence {sid!r}: length {n} exceeds max_len {cfg.max_len}; rejecting rather than truncating")
    ids = vocab.encode(tokens)
    emb = dc.embedding(params["enc.emb"], ids)
    if cfg.kind == "embedding-bag":
        return emb
    if cfg.kind == "bi-recurrent":
        h_fw = _run_rnn(emb, params["enc.rnn.fw.wx"], params["enc.rnn.fw.wh"],
                        params["enc.rnn.fw.b"], reverse=False)
        h_bw = _run_rnn(emb, params["enc.rnn.bw.wx"], params["enc.rnn.bw.wh"],
                        params["enc.rnn.bw.b"], reverse=True)
        return dc.concat([h_fw, h_bw], axis=-1)
    # tiny-attention
    q = dc.matmul(emb, params["enc.attn1.wq"])
    k = dc.matmul(emb, params["enc.attn1.wk"])
    v = dc.matmul(emb, params["enc.attn1.wv"])
    att = dc.softmax(dc.scale(dc.matmul(q, dc.transpose(k, (1, 0))), 1.0 / np.sqrt(cfg.d_h)), axis=-1)
    return dc.matmul(att, v)


def self_cross(h: Tensor) -> Tensor:
    """Pairwise concatenation grid: out[i, j] = h[i] (+) h[j], shape [N, N, 2D]."""
    if h.ndim != 2:
        raise ShapeError(f"self_cross expects [N, D], got {h.data.shape}")
    n, d = h.data.shape
    rows = np.repeat(h.data[:, None, :], n, axis=1)
    cols = np.repeat(h.data[None, :, :], n, axis=0)
    out_data = np.concatenate([rows, cols], axis=-1)

    def bw(g):
        if h.requires_grad:
            gh = g[:, :, :d].sum(axis=1, dtype=np.float64) + g[:, :, d:].sum(axis=0, dtype=np.float64)
            dc.accumulate_grad(h, gh)

    return Tensor(out_data, parents=(h,), backward_fn=bw, name="self_cross")


def position_indices(n: int, max_len: int, relative: bool = False) -> np.ndarray:
    """Grid of position codes, shifted by max_len into table-row indices.

    Verbatim rule (1-based i, j): code = N - i when j > i, else j - N.
    The relative variant substitutes the signed offset j - i.
    """
    if n > max_len:
        raise DataError(f"grid size {n} exceeds max_len {max_len}")
    i = np.arange(1, n + 1, dtype=np.int64)[:, None]
    j = np.arange(1, n + 1, dtype=np.int64)[None, :]
    codes = (j - i) if relative else np.where(j > i, n - i, j - n)
    return codes + max_len


def position_grid(n: int, table: Tensor, max_len: int, relative: bool = False) -> Tensor:
    """Look up the learned position embedding for every grid cell: [N, N, d_p]."""
    rows = 2 * max_len + 1
    if table.shape[0] != rows:
        raise ConfigError(f"position table has {table.shape[0]} rows, expected {rows} for max_len {max_len}")
    return dc.embedding(table, position_indices(n, max_len, relative))


def attention_grid(h: Tensor, wq: Tensor, wk: Tensor, d_a: int, d_head: int) -> Tensor:
    """Independent bilinear heads: score_d(i,j) = (h_i Q_d) . (h_j K_d) / sqrt(d_head).

    Returns the per-cell head scores stacked on the last axis: [N, N, d_a].
    """
    n = h.shape[0]
    if wq.shape != (h.shape[1], d_a * d_head) or wk.shape != (h.shape[1], d_a * d_head):
        raise ShapeError(
            f"attention_grid weights {wq.shape}/{wk.shape} do not match [{h.shape[1]}, {d_a * d_head}]")
    hq = dc.transpose(dc.reshape(dc.matmul(h, wq), (n, d_a, d_head)), (1, 0, 2))
    hk = dc.transpose(dc.reshape(dc.matmul(h, wk), (n, d_a, d_head)), (1, 2, 0))
    scores = dc.scale(dc.matmul(hq, hk), 1.0 / np.sqrt(d_head))
    return dc.transpose(scores, (1, 2, 0))


def fuse(m_pos: Tensor, m_att: Tensor, m_base: Tensor, w_so: Tensor, b_so: Tensor) -> Tensor:
    """ELU-gated linear fusion of the three per-cell feature blocks: [N, N, d_h]."""
    if not (m_pos.shape[:2] == m_att.shape[:2] == m_base.shape[:2]):
        raise ShapeError(
            f"fuse grids disagree on N: {m_pos.shape} vs {m_att.shape} vs {m_base.shape}")
    n = m_pos.shape[0]
    d_cat = m_pos.shape[2] + m_att.shape[2] + m_base.shape[2]
    if w_so.shape[0] != d_cat:
        raise ShapeError(f"fuse weight expects input dim {w_so.shape[0]}, grids supply {d_cat}")
    cat = dc.concat([m_pos, m_att, m_base], axis=-1)
    flat = dc.reshape(cat, (n * n, d_cat))
    z = dc.add(dc.matmul(flat, w_so), b_so)
    return dc.reshape(dc.elu(z), (n, n, w_so.shape[1]))


def build_pair_grid(h: Tensor, params: dict[str, Tensor], cfg: EncoderConfig) -> Tensor:
    """Assemble the fused pair grid from per-token vectors."""
    n = h.shape[0]
    m_base = self_cross(h)
    m_pos = position_grid(n, params["enc.pos_table"], cfg.max_len, cfg.relative_position)
    m_att = attention_grid(h, params["enc.grid.wq"], params["enc.grid.wk"], cfg.d_a, cfg.d_head)
    return fuse(m_pos, m_att, m_base, params["enc.fuse.w_so"], params["enc.fuse.b_so"])
