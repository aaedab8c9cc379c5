"""Datasets: loading, span resolution, overlap patterns, synthetic corpus.

Two input formats are supported. The canonical format is JSON lines with
explicit 1-based inclusive token spans:

    {"id": "s1", "text": "...", "triples": [
        {"subject": {"start": 1, "end": 2, "text": "..."},
         "relation": "works_for",
         "object": {"start": 5, "end": 5, "text": "..."}}]}

The benchmark-text format carries surface forms only:

    {"text": "...", "triple_list": [["subject text", "relation", "object text"], ...]}

whose mentions are resolved to token spans by leftmost whole-token match,
preferring a non-overlapping object match. Unusable records are skipped
with a logged warning and counted, never silently.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decoder import Triple
from .encoder import TokenSeq, tokenize
from .errors import ConfigError, DataError
from .tagger import RelSchema

log = logging.getLogger("bicon.corpus")


@dataclass
class Example:
    """One sentence with its gold triples."""

    sid: str
    text: str
    seq: TokenSeq
    triples: list[Triple]

    @property
    def n(self) -> int:
        return len(self.seq)


@dataclass
class LoadStats:
    """Counters for a dataset load; every skip is logged and tallied."""

    records: int = 0
    loaded: int = 0
    skipped_bad_record: int = 0
    skipped_too_long: int = 0
    skipped_unresolved: int = 0
    dropped_triples: int = 0


@dataclass
class LoadResult:
    examples: list[Example]
    schema: RelSchema
    stats: LoadStats


def _span_text(seq: TokenSeq, lo: int, hi: int) -> str:
    return " ".join(seq.tokens[lo - 1:hi])


def _parse_canonical(record: dict, sid: str, seq: TokenSeq) -> list[dict]:
    triples = []
    for t in record["triples"]:
        s, o = t["subject"], t["object"]
        for part, name in ((s, "subject"), (o, "object")):
            lo, hi = int(part["start"]), int(part["end"])
            if not (1 <= lo <= hi <= len(seq)):
                raise DataError(f"sentence {sid!r}: {name} span [{lo}, {hi}] outside "
                                f"{len(seq)}-token sentence")
        triples.append({
            "sb": int(s["start"]), "se": int(s["end"]),
            "ob": int(o["start"]), "oe": int(o["end"]),
            "relation": str(t["relation"]),
            "subject_text": s.get("text") or _span_text(seq, int(s["start"]), int(s["end"])),
            "object_text": o.get("text") or _span_text(seq, int(o["start"]), int(o["end"])),
        })
    return triples


def resolve_mention(seq: TokenSeq, mention: str, avoid: tuple[int, int] | None = None) -> tuple[int, int] | None:
    """Leftmost whole-token match of `mention`, preferring one outside `avoid`.

    Returns a 1-based inclusive span or None. If every match overlaps
    `avoid`, the leftmost match is returned anyway (nested mentions are
    legitimate).
    """
    want = tokenize(mention).tokens if mention.strip() else []
    if not want:
        return None
    n, m = len(seq), len(want)
    first_any = None
    for i in range(n - m + 1):
        if seq.tokens[i:i + m] == want:
            span = (i + 1, i + m)
            if first_any is None:
                first_any = span
            if avoid is None or span[1] < avoid[0] or span[0] > avoid[1]:
                return span
    return first_any


def _parse_benchmark(record: dict, sid: str, seq: TokenSeq, stats: LoadStats) -> list[dict]:
    triples = []
    for raw in record["triple_list"]:
        s_text, rel, o_text = raw
        s_span = resolve_mention(seq, str(s_text))
        o_span = resolve_mention(seq, str(o_text), avoid=s_span)
        if s_span is None or o_span is None:
            missing = "subject" if s_span is None else "object"
            log.warning("sentence %r: cannot resolve %s mention %r; dropping triple",
                        sid, missing, s_text if s_span is None else o_text)
            stats.dropped_triples += 1
            continue
        triples.append({
            "sb": s_span[0], "se": s_span[1], "ob": o_span[0], "oe": o_span[1],
            "relation": str(rel), "subject_text": str(s_text), "object_text": str(o_text),
        })
    return triples


def load_dataset(path: str | Path, fmt: str = "canonical", schema: RelSchema | None = None,
                 max_len: int | None = None) -> LoadResult:
    """Read a JSON-lines dataset (one sentence per line) into Examples.

    When `schema` is None the relation schema is built from the file
    (sorted unique names). Sentences longer than `max_len` are skipped with
    a warning (training-time encoding would reject them anyway).
    """
    if fmt not in ("canonical", "benchmark-text"):
        raise ConfigError(f"unknown dataset format {fmt!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file {str(path)!r} does not exist")
    stats = LoadStats()
    parsed: list[tuple[str, str, TokenSeq, list[dict]]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        stats.records += 1
        sid = f"{path.name}:{lineno}"
        try:
            record = json.loads(line)
            sid = str(record.get("id", sid))
            text = record["text"]
            seq = tokenize(text)
            if fmt == "canonical":
                raw_triples = _parse_canonical(record, sid, seq)
            else:
                raw_triples = _parse_benchmark(record, sid, seq, stats)
        except (KeyError, TypeError, ValueError, DataError) as exc:
            log.warning("sentence %r: unusable record (%s); skipping", sid, exc)
            stats.skipped_bad_record += 1
            continue
        if not raw_triples:
            log.warning("sentence %r: no resolvable triples; skipping", sid)
            stats.skipped_unresolved += 1
            continue
        if max_len is not None and len(seq) > max_len:
            log.warning("sentence %r: length %d exceeds max_len %d; skipping",
                        sid, len(seq), max_len)
            stats.skipped_too_long += 1
            continue
        parsed.append((sid, text, seq, raw_triples))

    if schema is None:
        names = sorted({t["relation"] for _, _, _, ts in parsed for t in ts})
        if not names:
            raise DataError(f"dataset {str(path)!r} yielded no usable sentences")
        schema = RelSchema(tuple(names))

    examples: list[Example] = []
    for sid, text, seq, raw_triples in parsed:
        try:
            triples = [Triple(sb=t["sb"], se=t["se"], rel=schema.id_of(t["relation"]),
                              ob=t["ob"], oe=t["oe"], rel_name=t["relation"],
                              subject_text=t["subject_text"], object_text=t["object_text"])
                       for t in raw_triples]
        except DataError as exc:
            log.warning("sentence %r: %s; skipping", sid, exc)
            stats.skipped_bad_record += 1
            continue
        examples.append(Example(sid=sid, text=text, seq=seq, triples=triples))
        stats.loaded += 1
    return LoadResult(examples=examples, schema=schema, stats=stats)


def save_canonical(examples: list[Example], path: str | Path) -> None:
    """Write Examples in the canonical JSON-lines format."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = {
                "id": ex.sid,
                "text": ex.text,
                "triples": [{
                    "subject": {"start": t.sb, "end": t.se,
                                "text": t.subject_text or _span_text(ex.seq, t.sb, t.se)},
                    "relation": t.rel_name,
                    "object": {"start": t.ob, "end": t.oe,
                               "text": t.object_text or _span_text(ex.seq, t.ob, t.oe)},
                } for t in ex.triples],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# overlap patterns


@dataclass(frozen=True)
class PatternLabel:
    """Sentence-level overlap flags plus the triple-count bucket (1..5, 5 = 5+)."""

    epo: bool
    seo: bool
    soo: bool
    bucket: int

    @property
    def normal(self) -> bool:
        return not (self.epo or self.seo or self.soo)


def _spans_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return max(a[0], b[0]) <= min(a[1], b[1])


def classify_pattern(triples) -> PatternLabel:
    """Overlap flags over a sentence's (deduplicated) triple set.

    EPO: two triples share both the subject span and the object span.
    SEO: two triples share exactly one entity span.
    SOO: some span is subject in one triple and object in another  or a
    subject span overlaps the object span within one triple (nesting).
    """
    ts = sorted(set(triples), key=lambda t: (t.sb, t.se, t.ob, t.oe, t.rel))
    if not ts:
        raise DataError("cannot classify a sentence with no triples")
    epo = seo = soo = False
    for t in ts:
        if _spans_overlap(t.subject_span(), t.object_span()):
            soo = True
    subjects = {t.subject_span() for t in ts}
    objects = {t.object_span() for t in ts}
    if subjects & objects:
        soo = True
    for i, a in enumerate(ts):
        for b in ts[i + 1:]:
            pair_a = (a.subject_span(), a.object_span())
            pair_b = (b.subject_span(), b.object_span())
            if pair_a == pair_b:
                epo = True
            shared = len({pair_a[0], pair_a[1]} & {pair_b[0], pair_b[1]})
            if shared == 1:
                seo = True
    return PatternLabel(epo=epo, seo=seo, soo=soo, bucket=min(len(ts), 5))


@dataclass
class DatasetStats:
    """Sentence/triple counts split by overlap pattern and triple-count bucket."""

    sentences: int
    triples: int
    relations: int
    normal: int
    epo: int
    seo: int
    soo: int
    buckets: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "sentences": self.sentences, "triples": self.triples, "relations": self.relations,
            "normal": self.normal, "epo": self.epo, "seo": self.seo, "soo": self.soo,
            "buckets": dict(self.buckets),
        }


def dataset_stats(examples: list[Example]) -> DatasetStats:
    buckets = {"1": 0, "2": 0, "3": 0, "4": 0, "5+": 0}
    normal = epo = seo = soo = 0
    triples = 0
    rel_names: set[str] = set()
    for ex in examples:
        label = classify_pattern(ex.triples)
        triples += len(set(ex.triples))
        rel_names.update(t.rel_name for t in ex.triples)
        normal += label.normal
        epo += label.epo
        seo += label.seo
        soo += label.soo
        buckets["5+" if label.bucket >= 5 else str(label.bucket)] += 1
    return DatasetStats(sentences=len(examples), triples=triples, relations=len(rel_names),
                        normal=normal, epo=epo, seo=seo, soo=soo, buckets=buckets)


# ---------------------------------------------------------------------------
# synthetic desk-scale corpus


SYNTH_RELATIONS = ("leads", "located_in", "works_for")

_PHRASES = {
    "located_in": ("sits", "in"),
    "works_for": ("serves", "at"),
    "leads": ("leads",),
}


def _entity_pool(rng: np.random.Generator) -> list[tuple[str, ...]]:
    """Deterministic pool of pronounceable entity names, some two tokens long."""
    consonants = "bdfgklmnprstvz"
    vowels = "aeiou"
    words: list[str] = []
    seen = set()
    # Small pool on purpose: every entity recurs across roles in the train
    # split, so dev sentences are new combinations of seen pieces.
    while len(words) < 14:
        w = "".join(rng.choice(list(consonants)) + rng.choice(list(vowels))
                    for _ in range(int(rng.integers(2, 4))))
        if w not in seen:
            seen.add(w)
            words.append(w)
    singles = [(w,) for w in words[:8]]
    doubles = [(words[8 + 2 * i], words[9 + 2 * i]) for i in range(3)]
    return singles + doubles


def _realize(plan: str, entities: list[tuple[str, ...]], schema: RelSchema,
             rng: np.random.Generator) -> tuple[list[str], list[Triple]]:
    """Emit tokens and gold triples for one sentence plan."""

    tokens: list[str] = []

    def put(words: tuple[str, ...]) -> tuple[int, int]:
        start = len(tokens) + 1
        tokens.extend(words)
        return (start, len(tokens))

    def phrase(rel: str) -> None:
        tokens.extend(_PHRASES[rel])

    def make(rel: str, s: tuple[int, int], o: tuple[int, int]) -> Triple:
        return Triple(sb=s[0], se=s[1], rel=schema.id_of(rel), ob=o[0], oe=o[1], rel_name=rel)

    def pick(k: int) -> list[tuple[str, ...]]:
        idx = rng.choice(len(entities), size=k, replace=False)
        return [entities[int(i)] for i in idx]

    triples: list[Triple] = []
    if plan == "normal":
        a, b = pick(2)
        rel = SYNTH_RELATIONS[int(rng.integers(len(SYNTH_RELATIONS)))]
        sa = put(a); phrase(rel); sb = put(b)
        triples.append(make(rel, sa, sb))
    elif plan == "seo":
        a, b, c = pick(3)
        r1, r2 = ("located_in", "works_for") if rng.random() < 0.5 else ("works_for", "leads")
        sa = put(a); phrase(r1); sb = put(b)
        tokens.append("and")
        phrase(r2); sc = put(c)
        triples += [make(r1, sa, sb), make(r2, sa, sc)]
    elif plan == "epo":
        a, b = pick(2)
        sa = put(a); phrase("located_in"); tokens.append("and"); phrase("works_for"); sb = put(b)
        triples += [make("located_in", sa, sb), make("works_for", sa, sb)]
    elif plan == "soo":
        a, b, c = pick(3)
        sa = put(a); phrase("works_for"); sb = put(b)
        tokens.append("who")
        phrase("leads"); sc = put(c)
        triples += [make("works_for", sa, sb), make("leads", sb, sc)]
    elif plan == "nested":
        pair = [e for e in entities if len(e) == 2]
        a = pair[int(rng.integers(len(pair)))]
        singles = [e for e in entities if len(e) == 1]
        c = singles[int(rng.integers(len(singles)))]
        sa = put(a); phrase("located_in"); sc = put(c)
        triples.append(make("located_in", sa, sc))
        triples.append(make("leads", sa, (sa[1], sa[1])))
    else:
        raise ConfigError(f"unknown synthetic plan {plan!r}")
    tokens.append(".")
    return tokens, triples


def generate_synthetic(n_train: int = 50, n_dev: int = 20, seed: int = 0,
                       vocab_budget: int = 200) -> tuple[list[Example], list[Example], RelSchema]:
    """Deterministic desk-scale corpus with planted SEO/EPO/SOO overlaps.

    Train and dev share the entity and phrase pools, so a model that learns
    the layout generalizes from the 50 training sentences to dev. The full
    token inventory stays within `vocab_budget`.
    """
    schema = RelSchema(SYNTH_RELATIONS)
    rng = np.random.default_rng(seed)
    entities = _entity_pool(rng)
    plans = ("normal", "seo", "epo", "soo", "nested")
    examples: list[Example] = []
    texts_seen: set[str] = set()
    total = n_train + n_dev
    for i in range(total):
        plan = plans[i % len(plans)]
        for _ in range(60):  # resample until the sentence is new
            tokens, triples = _realize(plan, entities, schema, rng)
            text = " ".join(tokens)
            if text not in texts_seen:
                break
        texts_seen.add(text)
        seq = tokenize(text)
        if seq.tokens != tokens:
            raise ConfigError(f"synthetic sentence does not re-tokenize cleanly: {text!r}")
        examples.append(Example(sid=f"synth-{i}", text=text, seq=seq, triples=triples))
    vocab_size = len({t for ex in examples for t in ex.seq.tokens})
    if vocab_size > vocab_budget:
        raise ConfigError(f"synthetic vocabulary {vocab_size} exceeds budget {vocab_budget}")
    return examples[:n_train], examples[n_train:], schema
