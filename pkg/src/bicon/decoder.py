"""Splice decoding: tag tables back to triple sets.

Each B-E cell (i, j) anchors triples: subject ends come from the E-E marks
below it in column j (scanning down, stopping at the next B-E, nearest
first), object begins from the B-B marks to its left in row i (scanning
left, stopping at the next B-E, nearest first). Missing markers fall back
to single-token spans, which makes the round trip exact for single-token
and nested-overlap collisions. When one side yields a single candidate it
pairs with every candidate on the other side (several triples may share an
anchor); when both sides yield several, candidates pair nearest-to-nearest,
since such tables are ambiguous and admit no exact inversion.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .diffcore import Tensor
from .errors import ShapeError
from .tagger import BB, BE, EE, RelSchema, TagTable, build_gold_table


@dataclass(frozen=True)
class Triple:
    """A relational triple over 1-based inclusive token spans.

    Equality and hashing use spans and the relation id only; surface texts
    ride along for reporting.
    """

    sb: int
    se: int
    rel: int
    ob: int
    oe: int
    rel_name: str = field(default="", compare=False)
    subject_text: str = field(default="", compare=False)
    object_text: str = field(default="", compare=False)

    def subject_span(self) -> tuple[int, int]:
        return (self.sb, self.se)

    def object_span(self) -> tuple[int, int]:
        return (self.ob, self.oe)


def label_tables(logits) -> TagTable:
    """Argmax over the label axis; ties resolve to the lowest label id."""
    arr = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if arr.ndim != 4:
        raise ShapeError(f"label_tables expects [N, N, K, L] logits, got {arr.shape}")
    return TagTable(arr.argmax(axis=-1).astype(np.int8))


def _splice_candidates(grid: np.ndarray, i: int, j: int) -> tuple[list[int], list[int]]:
    """Subject-end and object-begin candidates for the B-E anchor at (i, j)."""
    n = grid.shape[0]
    ends: list[int] = []
    for i2 in range(i, n):
        lab = grid[i2, j]
        if lab == EE:
            ends.append(i2)
        elif lab == BE and i2 > i:
            break
    if not ends:
        ends = [i]
    begins: list[int] = []
    for j2 in range(j, -1, -1):
        lab = grid[i, j2]
        if lab == BB:
            begins.append(j2)
        elif lab == BE and j2 < j:
            break
    if not begins:
        begins = [j]
    return ends, begins


def decode_tables(table: TagTable, schema: RelSchema | None = None) -> set[Triple]:
    """Splice every B-E anchor against its E-E / B-B candidates."""
    tab = table.data
    n, _, k = tab.shape
    out: set[Triple] = set()
    for r in range(k):
        rel_name = schema.names[r] if schema is not None else ""
        grid = tab[:, :, r]
        for i, j in np.argwhere(grid == BE):
            i, j = int(i), int(j)
            ends, begins = _splice_candidates(grid, i, j)
            if len(ends) == 1 or len(begins) == 1:
                combos = [(se, ob) for se in ends for ob in begins]
            else:
                width = max(len(ends), len(begins))
                ends_p = ends + [ends[-1]] * (width - len(ends))
                begins_p = begins + [begins[-1]] * (width - len(begins))
                combos = list(zip(ends_p, begins_p))
            for se, ob in combos:
                out.add(Triple(sb=i + 1, se=se + 1, rel=r, ob=ob + 1, oe=j + 1,
                               rel_name=rel_name))
    return out


def attach_text(triples: set[Triple], tokens: list[str]) -> set[Triple]:
    """Fill in surface texts from the token list (spans are 1-based)."""
    out = set()
    for t in triples:
        out.add(Triple(sb=t.sb, se=t.se, rel=t.rel, ob=t.ob, oe=t.oe,
                       rel_name=t.rel_name,
                       subject_text=" ".join(tokens[t.sb - 1:t.se]),
                       object_text=" ".join(tokens[t.ob - 1:t.oe])))
    return out


@dataclass
class RoundtripReport:
    """Outcome of the exhaustive gold -> decode -> compare enumeration."""

    max_n: int
    total: int = 0
    exact: int = 0
    ambiguous_failures: int = 0
    unexplained_failures: int = 0
    unexplained_samples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.unexplained_failures == 0

    def summary(self) -> str:
        return (f"round-trip N<={self.max_n}: {self.exact}/{self.total} exact, "
                f"{self.ambiguous_failures} information-destroying collisions, "
                f"{self.unexplained_failures} unexplained failures")


def enumerate_roundtrip(max_n: int = 6, max_triples: int = 2) -> RoundtripReport:
    """Exhaustively check decode(build_gold(T)) == T for small placements.

    Enumerates every 1..max_triples-sized triple set over one relation and
    all span placements with N <= max_n. Distinct sets can collide onto the
    same gold table (the table encoding is lossy there); such placements are
    counted as ambiguous, not as decoder failures, since no decoder can
    invert them. Any failure on a uniquely-encoded placement is reported as
    unexplained.
    """
    schema = RelSchema(("r0",))
    report = RoundtripReport(max_n=max_n)
    for n in range(1, max_n + 1):
        spans = [(b, e) for b in range(1, n + 1) for e in range(b, n + 1)]
        triples = [Triple(sb, se, 0, ob, oe) for sb, se in spans for ob, oe in spans]
        sets: list[tuple[Triple, ...]] = [(t,) for t in triples]
        if max_triples >= 2:
            sets.extend(itertools.combinations(triples, 2))

        tables = [build_gold_table(ts, n, schema) for ts in sets]
        seen: dict[bytes, int] = {}
        collided: set[bytes] = set()
        for ts, table in zip(sets, tables):
            sig = table.signature()
            if sig in seen:
                collided.add(sig)
            seen[sig] = seen.get(sig, 0) + 1

        for ts, table in zip(sets, tables):
            report.total += 1
            decoded = decode_tables(table)
            if decoded == set(ts):
                report.exact += 1
            elif table.signature() in collided:
                report.ambiguous_failures += 1
            else:
                report.unexplained_failures += 1
                if len(report.unexplained_samples) < 10:
                    report.unexplained_samples.append((n, tuple(sorted(
                        (t.sb, t.se, t.ob, t.oe) for t in ts))))
    return report
