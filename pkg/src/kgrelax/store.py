"""Immutable scored triple store with score-ordered pattern scans.

Triples carry a non-negative raw score. Scans over a triple pattern emit
matches in non-increasing normalized score, where each match is normalized
by the maximum raw score among the pattern's matches. The store also
computes exact answer counts and exact join selectivities by enumeration,
cached per canonicalized pattern set.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

TRIPLES_FILENAME = "triples.tsv"
CHECKSUM_FILENAME = "checksum.txt"


class TripleParseError(ValueError):
    """Malformed triple record; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class PatternError(ValueError):
    """Pattern the store refuses to serve (e.g. all three positions variable)."""


class QueryShapeError(ValueError):
    """Query whose patterns are not connected through shared variables."""


def is_variable(token: str) -> bool:
    return token.startswith("?")


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str
    raw_score: float

    def __post_init__(self):
        if self.raw_score < 0:
            raise ValueError(f"negative score {self.raw_score} on ({self.subject}, {self.predicate}, {self.object})")

    @property
    def terms(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)


@dataclass(frozen=True)
class TriplePattern:
    subject: str
    predicate: str
    object: str

    @property
    def tokens(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)

    @property
    def variables(self) -> tuple[str, ...]:
        """Distinct variable names in position order."""
        seen: list[str] = []
        for tok in self.tokens:
            if is_variable(tok) and tok not in seen:
                seen.append(tok)
        return tuple(seen)

    @property
    def n_constants(self) -> int:
        return sum(1 for tok in self.tokens if not is_variable(tok))

    def matches(self, triple: Triple) -> bool:
        binding: dict[str, str] = {}
        for tok, term in zip(self.tokens, triple.terms):
            if is_variable(tok):
                if binding.setdefault(tok, term) != term:
                    return False
            elif tok != term:
                return False
        return True

    def bind(self, triple: Triple) -> dict[str, str] | None:
        """Variable binding for a matching triple, or None on mismatch."""
        binding: dict[str, str] = {}
        for tok, term in zip(self.tokens, triple.terms):
            if is_variable(tok):
                if binding.setdefault(tok, term) != term:
                    return None
            elif tok != term:
                return None
        return binding

    def substitute(self, binding: Mapping[str, str]) -> "TriplePattern":
        toks = tuple(binding.get(tok, tok) if is_variable(tok) else tok for tok in self.tokens)
        return TriplePattern(*toks)

    def canonical(self) -> "TriplePattern":
        """Rename variables positionally (?v0, ?v1, ...) for shape-level keys."""
        names: dict[str, str] = {}
        toks = []
        for tok in self.tokens:
            if is_variable(tok):
                if tok not in names:
                    names[tok] = f"?v{len(names)}"
                toks.append(names[tok])
            else:
                toks.append(tok)
        return TriplePattern(*toks)

    def __str__(self) -> str:
        return " ".join(self.tokens)

    @classmethod
    def parse(cls, text: str) -> "TriplePattern":
        toks = text.split()
        if len(toks) != 3:
            raise PatternError(f"pattern needs exactly 3 tokens, got {len(toks)}: {text!r}")
        return cls(*toks)


@dataclass(frozen=True)
class TripleQuery:
    patterns: tuple[TriplePattern, ...]

    def __post_init__(self):
        if not self.patterns:
            raise QueryShapeError("query needs at least one triple pattern")
        if len(set(self.patterns)) != len(self.patterns):
            raise QueryShapeError("duplicate triple pattern in query")
        for p in self.patterns:
            if p.n_constants == 0:
                raise PatternError(f"unselective pattern (all positions variable): {p}")
        self._check_connected()

    def _check_connected(self):
        n = len(self.patterns)
        if n == 1:
            return
        var_sets = [set(p.variables) for p in self.patterns]
        reached = {0}
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in range(n):
                if j not in reached and var_sets[i] & var_sets[j]:
                    reached.add(j)
                    frontier.append(j)
        if len(reached) != n:
            raise QueryShapeError("patterns are not connected via shared variables (cartesian product)")

    @property
    def variables(self) -> tuple[str, ...]:
        seen: list[str] = []
        for p in self.patterns:
            for v in p.variables:
                if v not in seen:
                    seen.append(v)
        return tuple(seen)

    def __iter__(self) -> Iterator[TriplePattern]:
        return iter(self.patterns)

    def __len__(self) -> int:
        return len(self.patterns)

    @classmethod
    def parse(cls, text: str) -> "TripleQuery":
        """One pattern per non-blank line."""
        pats = tuple(TriplePattern.parse(line) for line in text.splitlines() if line.strip())
        return cls(pats)

    def __str__(self) -> str:
        return "\n".join(str(p) for p in self.patterns)


@dataclass(frozen=True)
class ScoredMatch:
    binding: dict[str, str]
    source_triple: Triple
    norm_score: float


@dataclass(frozen=True)
class SelectivityInfo:
    phi: float
    joined_count: int
    left_count: int
    right_count: int
    degenerate: bool  # True when the denominator was zero


def canonical_query_key(patterns: Sequence[TriplePattern]) -> tuple[str, ...]:
    """Order-insensitive key for a pattern set, variables renamed by appearance.

    Patterns are first sorted by their variable-masked serialization so that
    variable names never influence the ordering, then renamed jointly.
    """
    masked = sorted(patterns, key=lambda p: tuple("?" if is_variable(t) else t for t in p.tokens))
    names: dict[str, str] = {}
    out = []
    for p in masked:
        toks = []
        for tok in p.tokens:
            if is_variable(tok):
                if tok not in names:
                    names[tok] = f"?v{len(names)}"
                toks.append(names[tok])
            else:
                toks.append(tok)
        out.append(" ".join(toks))
    return tuple(out)


_MASKS = [
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (True, True, False),
    (True, False, True),
    (False, True, True),
]


class TripleStore:
    """Immutable triple store; build via :func:`load_triples` or :meth:`from_records`.

    Thread-safe after construction: scans hold private cursors and the
    internal caches take a lock around insertion.
    """

    def __init__(self, triples: Iterable[Triple]):
        by_key: dict[tuple[str, str, str], Triple] = {}
        for t in triples:
            prev = by_key.get(t.terms)
            if prev is None or t.raw_score > prev.raw_score:
                by_key[t.terms] = t
        # Global order: score descending, then lexicographic on the terms.
        # Per-key index lists inherit this order, which makes scans
        # deterministic under score ties.
        ordered = sorted(by_key.values(), key=lambda t: (-t.raw_score, t.terms))
        self._triples: tuple[Triple, ...] = tuple(ordered)
        self._by_key = by_key
        self._indexes: dict[tuple[bool, bool, bool], dict[tuple[str, ...], list[Triple]]] = {}
        for mask in _MASKS:
            idx: dict[tuple[str, ...], list[Triple]] = {}
            for t in self._triples:
                key = tuple(term for term, keep in zip(t.terms, mask) if keep)
                idx.setdefault(key, []).append(t)
            self._indexes[mask] = idx
        self._lock = threading.Lock()
        self._candidate_cache: dict[str, list[Triple]] = {}
        self._answer_count_cache: dict[tuple[str, ...], int] = {}
        self._selectivity_cache: dict[tuple, SelectivityInfo] = {}
        self._checksum: str | None = None

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str, str, float]]) -> "TripleStore":
        return cls(Triple(s, p, o, float(score)) for s, p, o, score in records)

    def __len__(self) -> int:
        return len(self._triples)

    @property
    def triples(self) -> tuple[Triple, ...]:
        return self._triples

    # ------------------------------------------------------------------
    # pattern scans

    def _candidates(self, pattern: TriplePattern) -> list[Triple]:
        key = str(pattern.canonical())
        cached = self._candidate_cache.get(key)
        if cached is not None:
            return cached
        mask = tuple(not is_variable(tok) for tok in pattern.tokens)
        if not any(mask):
            raise PatternError(f"unselective pattern (all positions variable): {pattern}")
        if all(mask):
            t = self._by_key.get(pattern.tokens)
            cands = [t] if t is not None else []
        else:
            idx_key = tuple(tok for tok, keep in zip(pattern.tokens, mask) if keep)
            cands = self._indexes[mask].get(idx_key, [])
        if len(pattern.variables) < sum(1 for m in mask if not m):
            # repeated variable: keep only triples binding it consistently
            cands = [t for t in cands if pattern.bind(t) is not None]
        with self._lock:
            self._candidate_cache[key] = cands
        return cands

    def scan_sorted(self, pattern: TriplePattern) -> Iterator[ScoredMatch]:
        """All matches in non-increasing norm_score, ties lexicographic."""
        cands = self._candidates(pattern)
        if not cands:
            return
        max_raw = cands[0].raw_score
        for t in cands:
            norm = t.raw_score / max_raw if max_raw > 0 else 0.0
            binding = pattern.bind(t)
            assert binding is not None
            yield ScoredMatch(binding=binding, source_triple=t, norm_score=norm)

    def match_count(self, pattern: TriplePattern) -> int:
        return len(self._candidates(pattern))

    def max_raw_score(self, pattern: TriplePattern) -> float:
        cands = self._candidates(pattern)
        return cands[0].raw_score if cands else 0.0

    # ------------------------------------------------------------------
    # exact answer counting and join selectivity

    def count_answers(self, patterns: Sequence[TriplePattern]) -> int:
        """Number of distinct variable bindings answering the conjunction."""
        key = canonical_query_key(patterns)
        with self._lock:
            if key in self._answer_count_cache:
                return self._answer_count_cache[key]
        count = self._enumerate_count(list(patterns), {})
        with self._lock:
            self._answer_count_cache[key] = count
        return count

    def _enumerate_count(self, remaining: list[TriplePattern], binding: dict[str, str]) -> int:
        if not remaining:
            return 1
        # cheapest-first: expand the pattern with the fewest candidates
        # under the current binding
        best_i = min(range(len(remaining)),
                     key=lambda i: len(self._candidates(remaining[i].substitute(binding))))
        pat = remaining[best_i].substitute(binding)
        rest = remaining[:best_i] + remaining[best_i + 1:]
        total = 0
        for t in self._candidates(pat):
            ext = pat.bind(t)
            if ext is None:
                continue
            total += self._enumerate_count(rest, {**binding, **ext})
        return total

    def join_selectivity_info(self, left: Sequence[TriplePattern], right: TriplePattern) -> SelectivityInfo:
        left = list(left)
        if not any(set(l.variables) & set(right.variables) for l in left):
            raise QueryShapeError(f"right pattern {right} shares no variable with the left set")
        key = canonical_query_key(left) + ("|right|",) + canonical_query_key(left + [right])
        with self._lock:
            if key in self._selectivity_cache:
                return self._selectivity_cache[key]
        left_count = self.count_answers(left)
        right_count = self.match_count(right)
        joined = self.count_answers(left + [right])
        denom = left_count * right_count
        if denom == 0:
            info = SelectivityInfo(0.0, joined, left_count, right_count, degenerate=True)
        else:
            info = SelectivityInfo(joined / denom, joined, left_count, right_count, degenerate=False)
        with self._lock:
            self._selectivity_cache[key] = info
        return info

    def join_selectivity(self, left: Sequence[TriplePattern], right: TriplePattern) -> float:
        return self.join_selectivity_info(left, right).phi

    # ------------------------------------------------------------------
    # persistence

    def canonical_lines(self) -> Iterator[str]:
        for t in sorted(self._triples, key=lambda t: t.terms):
            yield f"{t.subject}\t{t.predicate}\t{t.object}\t{t.raw_score!r}\n"

    @property
    def checksum(self) -> str:
        if self._checksum is None:
            h = hashlib.sha256()
            for line in self.canonical_lines():
                h.update(line.encode("utf-8"))
            self._checksum = h.hexdigest()
        return self._checksum

    def save(self, directory: str | Path) -> Path:
        """Write the store artifact directory (triples + checksum)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / TRIPLES_FILENAME, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.canonical_lines():
                fh.write(line)
        (directory / CHECKSUM_FILENAME).write_text(self.checksum + "\n", encoding="utf-8")
        return directory

    @classmethod
    def open(cls, directory: str | Path) -> "TripleStore":
        directory = Path(directory)
        path = directory / TRIPLES_FILENAME
        if not path.exists():
            raise FileNotFoundError(f"not a store directory (missing {TRIPLES_FILENAME}): {directory}")
        return load_triples(path)


def parse_triple_line(line: str, line_no: int) -> Triple:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 4:
        raise TripleParseError(f"expected 4 tab-separated fields, got {len(fields)}", line_no)
    s, p, o, score_text = fields
    if not s or not p or not o:
        raise TripleParseError("empty term", line_no)
    try:
        score = float(score_text)
    except ValueError:
        raise TripleParseError(f"bad score literal {score_text!r}", line_no) from None
    if score < 0:
        raise TripleParseError(f"negative score {score_text}", line_no)
    return Triple(s, p, o, score)


def load_triples(source: str | Path | Iterable[str]) -> TripleStore:
    """Build a store from a triples TSV file path or an iterable of lines.

    Duplicate (s, p, o) records keep the maximum raw score.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_triples(list(fh))
    triples = []
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        triples.append(parse_triple_line(line, line_no))
    return TripleStore(triples)
