"""Set-semantics scoring of predicted triples.

Two match modes: partial compares (subject end, relation, object end); exact
compares full spans and the relation. Sub-task views drop the relation (the
entity-pair task) or the entities (the relation task). All counting is over
deduplicated projections, so duplicate predictions never change a score,
and each gold item can satisfy at most one prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Example, classify_pattern
from .decoder import Triple
from .errors import ConfigError, ShapeError

MODES = ("partial", "exact")
TASKS = ("triple", "so", "r")

PATTERN_GROUPS = ("Normal", "EPO", "SEO", "SOO")
BUCKET_KEYS = ("1", "2", "3", "4", "5+")


def _project(t: Triple, mode: str, task: str) -> tuple:
    if mode not in MODES:
        raise ConfigError(f"unknown match mode {mode!r}; choose from {MODES}")
    if task == "triple":
        return (t.se, t.rel, t.oe) if mode == "partial" else (t.sb, t.se, t.rel, t.ob, t.oe)
    if task == "so":
        return (t.se, t.oe) if mode == "partial" else (t.sb, t.se, t.ob, t.oe)
    if task == "r":
        return (t.rel,)
    raise ConfigError(f"unknown scoring task {task!r}; choose from {TASKS}")


def match_triple(pred: Triple, gold: Triple, mode: str) -> bool:
    """True when the prediction matches the gold triple under the given mode."""
    return _project(pred, mode, "triple") == _project(gold, mode, "triple")


def prf1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Micro precision/recall/F1; a zero denominator scores 0."""
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "Counts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn

    def scores(self) -> tuple[float, float, float]:
        return prf1(self.tp, self.fp, self.fn)

    def to_dict(self) -> dict:
        p, r, f1 = self.scores()
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": p, "recall": r, "f1": f1}


def score_sets(preds, golds, mode: str, task: str = "triple") -> Counts:
    """Count TP/FP/FN between two triple sets under a mode and task projection."""
    p_keys = {_project(t, mode, task) for t in preds}
    g_keys = {_project(t, mode, task) for t in golds}
    tp = len(p_keys & g_keys)
    return Counts(tp=tp, fp=len(p_keys) - tp, fn=len(g_keys) - tp)


@dataclass
class EvalReport:
    """Corpus-level scores: overall, sub-tasks, pattern and bucket splits."""

    mode: str
    sentences: int
    overall: Counts
    so: Counts
    r: Counts
    patterns: dict[str, Counts]
    buckets: dict[str, Counts]

    @property
    def f1(self) -> float:
        return self.overall.scores()[2]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "sentences": self.sentences,
            "overall": self.overall.to_dict(),
            "subtasks": {"so": self.so.to_dict(), "r": self.r.to_dict()},
            "patterns": {k: v.to_dict() for k, v in self.patterns.items()},
            "buckets": {k: v.to_dict() for k, v in self.buckets.items()},
        }

    def to_text(self) -> str:
        rows = [("group", "P", "R", "F1", "TP", "FP", "FN")]

        def fmt(name: str, c: Counts) -> tuple[str, ...]:
            p, r, f1 = c.scores()
            return (name, f"{p:.4f}", f"{r:.4f}", f"{f1:.4f}",
                    str(c.tp), str(c.fp), str(c.fn))

        rows.append(fmt(f"overall[{self.mode}]", self.overall))
        rows.append(fmt("pairs(s,o)", self.so))
        rows.append(fmt("relation(r)", self.r))
        for name in PATTERN_GROUPS:
            rows.append(fmt(f"pattern:{name}", self.patterns[name]))
        for key in BUCKET_KEYS:
            rows.append(fmt(f"triples:{key}", self.buckets[key]))
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                 for row in rows]
        return "\n".join(lines)


def score_corpus(examples: list[Example], predictions: list, mode: str) -> EvalReport:
    """Score aligned per-sentence prediction sets against gold.

    `predictions[i]` is the triple set predicted for `examples[i]`.
    """
    if len(examples) != len(predictions):
        raise ShapeError(f"{len(predictions)} prediction sets for {len(examples)} sentences")
    overall, so, r = Counts(), Counts(), Counts()
    patterns = {k: Counts() for k in PATTERN_GROUPS}
    buckets = {k: Counts() for k in BUCKET_KEYS}
    for ex, preds in zip(examples, predictions):
        golds = set(ex.triples)
        c = score_sets(preds, golds, mode)
        overall.add(c)
        so.add(score_sets(preds, golds, mode, task="so"))
        r.add(score_sets(preds, golds, mode, task="r"))
        label = classify_pattern(golds)
        if label.normal:
            patterns["Normal"].add(c)
        if label.epo:
            patterns["EPO"].add(c)
        if label.seo:
            patterns["SEO"].add(c)
        if label.soo:
            patterns["SOO"].add(c)
        buckets["5+" if label.bucket >= 5 else str(label.bucket)].add(c)
    return EvalReport(mode=mode, sentences=len(examples), overall=overall, so=so, r=r,
                      patterns=patterns, buckets=buckets)
