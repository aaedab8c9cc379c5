"""Joint relational triple extraction over 2D pair grids.

Sentences become N x N grids of token-pair cells; difference convolutions
consolidate local neighborhoods, channel and spatial attention consolidate
globally, and per-relation tag tables decode back into (subject, relation,
object) triples.
"""

from .config import Config
from .corpus import Example, generate_synthetic, load_dataset
from .decoder import Triple, decode_tables, enumerate_roundtrip, label_tables
from .encoder import TokenSeq, Vocab, tokenize
from .errors import BiconError, ConfigError, DataError, ShapeError
from .metrics import EvalReport, score_corpus
from .model import BiconModel
from .tagger import RelSchema, TagTable, build_gold_table
from .trainer import Adam, load_checkpoint, restore_model, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "BiconError", "BiconModel", "Config", "ConfigError", "DataError",
    "EvalReport", "Example", "RelSchema", "ShapeError", "TagTable", "TokenSeq",
    "Triple", "Vocab", "build_gold_table", "decode_tables", "enumerate_roundtrip",
    "generate_synthetic", "label_tables", "load_dataset", "load_checkpoint",
    "restore_model", "save_checkpoint", "score_corpus", "tokenize", "train",
    "__version__",
]
