"""Full model: sentence encoding, pair grid, consolidation, tag scoring."""

from __future__ import annotations

import numpy as np

from . import decoder, encoder, globalattn, pdconv, tagger
from .config import Config
from .diffcore import Tensor, zero_grad
from .encoder import TokenSeq, Vocab
from .errors import ConfigError
from .tagger import RelSchema, TagTable


class BiconModel:
    """Grid tagger with local difference-convolution and global attention.

    Bundles the vocabulary, relation schema and all parameters, so a model
    instance is self-contained for training, prediction and checkpointing.
    With ``use_biconsolidation`` off the tag head reads the fused pair grid
    directly; both consolidation stages and their parameters disappear.
    """

    def __init__(self, cfg: Config, vocab: Vocab, schema: RelSchema,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.vocab = vocab
        self.schema = schema
        self.params: dict[str, Tensor] = {}
        self.params.update(encoder.init_params(cfg.encoder_config(), len(vocab), rng))
        if cfg.use_biconsolidation:
            self.params.update(pdconv.init_stack_params(cfg.stack_config(), cfg.d_h, rng))
            self.params.update(globalattn.init_params(cfg.d_h, rng))
        self.params.update(tagger.init_params(cfg.d_h, schema.k, cfg.head_config(), rng))

    @property
    def n_params(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def forward(self, seq: TokenSeq, train: bool = False,
                rng: np.random.Generator | None = None,
                record: dict | None = None) -> Tensor:
        """Score a sentence into tag logits of shape [N, N, K, 4].

        When ``record`` is a dict the named intermediate grids are stored in
        it: "M_so" (fused pair grid), "block1".. (each local conv block) and
        "T_so" (the grid the tag head reads).
        """
        cfg = self.cfg
        h = encoder.encode_tokens(seq, self.vocab, self.params, cfg.encoder_config())
        grid = encoder.build_pair_grid(h, self.params, cfg.encoder_config())
        if record is not None:
            record["M_so"] = grid
        if cfg.use_biconsolidation:
            grid = pdconv.local_consolidate(grid, cfg.stack_config(), self.params,
                                            record=record)
            grid = globalattn.global_consolidate(grid, self.params, cfg.global_config())
        if record is not None:
            record["T_so"] = grid
        return tagger.score_tables(grid, self.params, self.schema.k,
                                   cfg.head_config(), train=train, rng=rng)

    def loss_on(self, seq: TokenSeq, gold: TagTable, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        logits = self.forward(seq, train=train, rng=rng)
        return tagger.loss(logits, gold)

    def predict(self, seq: TokenSeq) -> set[decoder.Triple]:
        logits = self.forward(seq, train=False)
        labels = decoder.label_tables(logits.data)
        triples = decoder.decode_tables(labels, self.schema)
        return decoder.attach_text(triples, seq.tokens)

    def zero_grad(self) -> None:
        zero_grad(self.params.values())

    # Checkpoint glue: flat name -> array view of the parameters.
    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ConfigError(
                f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, t in self.params.items():
            arr = np.asarray(arrays[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ConfigError(f"parameter {name!r} has shape {arr.shape}, "
                                  f"expected {t.data.shape}")
            t.data = arr.copy()
