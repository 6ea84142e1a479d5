"""Weighted relaxation rules: storage, lookup, co-occurrence mining, TSV IO.

A rule rewrites one triple pattern into a similar one at a score discount
w in [0, 1]. Rules are matched on pattern shape: variable names do not
matter, only which positions are variables and which constants they carry.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .store import TriplePattern, TripleStore, is_variable


class RuleError(ValueError):
    pass


class UnsupportedShapeError(ValueError):
    """Store is not in the entity-term shape the miner expects."""


@dataclass(frozen=True)
class WeightedRelaxationRule:
    domain: TriplePattern
    range: TriplePattern
    weight: float

    def __post_init__(self):
        if not (0.0 <= self.weight <= 1.0):
            raise RuleError(f"weight {self.weight} outside [0, 1]")
        if self.domain.canonical() == self.range.canonical():
            raise RuleError(f"domain equals range: {self.domain}")
        if set(self.domain.variables) != set(self.range.variables):
            raise RuleError(
                f"range variables must mirror domain variables: {self.domain} -> {self.range}")


def _rename_range(domain: TriplePattern, range_: TriplePattern, target: TriplePattern) -> TriplePattern:
    """Instantiate a rule's range with the target pattern's variable names."""
    mapping: dict[str, str] = {}
    for dom_tok, tgt_tok in zip(domain.tokens, target.tokens):
        if is_variable(dom_tok):
            mapping[dom_tok] = tgt_tok
    toks = tuple(mapping.get(tok, tok) if is_variable(tok) else tok for tok in range_.tokens)
    return TriplePattern(*toks)


class RuleSet:
    """Immutable collection of relaxation rules grouped by domain shape.

    Per-domain lists are kept sorted by (weight descending, range pattern
    ascending) so the head is always the top-weighted relaxation.
    """

    def __init__(self, rules: Iterable[WeightedRelaxationRule] = ()):
        grouped: dict[str, list[WeightedRelaxationRule]] = {}
        seen: set[tuple[str, str]] = set()
        for rule in rules:
            dom_key = str(rule.domain.canonical())
            pair = (dom_key, str(rule.range.canonical()))
            if pair in seen:
                raise RuleError(f"duplicate rule {rule.domain} -> {rule.range}")
            seen.add(pair)
            grouped.setdefault(dom_key, []).append(rule)
        for lst in grouped.values():
            lst.sort(key=lambda r: (-r.weight, str(r.range.canonical())))
        self._by_domain = grouped

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_domain.values())

    def __iter__(self) -> Iterator[WeightedRelaxationRule]:
        for dom_key in sorted(self._by_domain):
            yield from self._by_domain[dom_key]

    def relaxations_for(self, pattern: TriplePattern) -> list[tuple[TriplePattern, float]]:
        """All relaxed forms of `pattern`, weight-descending."""
        rules = self._by_domain.get(str(pattern.canonical()), ())
        return [(_rename_range(r.domain, r.range, pattern), r.weight) for r in rules]

    def top_relaxation(self, pattern: TriplePattern) -> tuple[TriplePattern, float] | None:
        rels = self.relaxations_for(pattern)
        return rels[0] if rels else None

    # ------------------------------------------------------------------
    # TSV round trip: domain<TAB>range<TAB>weight

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rule in self:
                fh.write(f"{rule.domain}\t{rule.range}\t{rule.weight!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> "RuleSet":
        rules = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                fields = line.rstrip("\n").split("\t")
                if len(fields) != 3:
                    raise RuleError(f"line {line_no}: expected 3 tab-separated fields")
                try:
                    weight = float(fields[2])
                except ValueError:
                    raise RuleError(f"line {line_no}: bad weight {fields[2]!r}") from None
                rules.append(WeightedRelaxationRule(
                    TriplePattern.parse(fields[0]), TriplePattern.parse(fields[1]), weight))
        return cls(rules)


def mine_cooccurrence_rules(store: TripleStore, min_weight: float) -> RuleSet:
    """Mine term-to-term relaxations from an entity-term store.

    Expects every triple to share one predicate, shaped (entity, pred, term).
    For each ordered term pair the rule weight is the fraction of T1's
    entities that also carry T2.
    """
    if len(store) == 0:
        raise UnsupportedShapeError("empty store")
    predicates = {t.predicate for t in store.triples}
    if len(predicates) != 1:
        raise UnsupportedShapeError(
            f"expected a single predicate (entity-term shape), found {len(predicates)}")
    pred = predicates.pop()

    entities_by_term: dict[str, set[str]] = {}
    terms_by_entity: dict[str, set[str]] = {}
    for t in store.triples:
        entities_by_term.setdefault(t.object, set()).add(t.subject)
        terms_by_entity.setdefault(t.subject, set()).add(t.object)

    rules = []
    for t1, ents in sorted(entities_by_term.items()):
        co_terms: set[str] = set()
        for e in ents:
            co_terms |= terms_by_entity[e]
        for t2 in sorted(co_terms - {t1}):
            w = len(ents & entities_by_term[t2]) / len(ents)
            if w >= min_weight:
                rules.append(WeightedRelaxationRule(
                    TriplePattern("?s", pred, t1), TriplePattern("?s", pred, t2), w))
    return RuleSet(rules)
