"""Brute-force ground truth over the full relaxation space.

Every combination of per-pattern choices (the original pattern or one of
its relaxations) is evaluated as a separate conjunctive query by
nested-loop join over full-store filters, with no reliance on the store's
sorted indexes. An answer's score is the best weighted score over all
combinations that produce it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .relax import RuleSet
from .store import Triple, TriplePattern, TripleQuery, TripleStore

COMBINATION_GUARD = 10_000_000


class OracleGuardError(RuntimeError):
    """Enumeration size exceeds the brute-force guard."""


@dataclass(frozen=True)
class OracleAnswer:
    binding: dict[str, str]
    score: float
    # per query slot: the (pattern, weight) choice achieving the score
    certificate: tuple[tuple[str, float], ...]

    @property
    def key(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(self.binding.items()))

    @property
    def relaxed_slots(self) -> tuple[int, ...]:
        return tuple(i for i, (_, w) in enumerate(self.certificate) if w != 1.0)


def _filter_matches(store: TripleStore, pattern: TriplePattern) -> list[tuple[dict[str, str], float]]:
    """All (binding, norm_score) for a pattern via a full linear scan."""
    matched: list[tuple[dict[str, str], Triple]] = []
    max_raw = 0.0
    for t in store.triples:
        b = pattern.bind(t)
        if b is not None:
            matched.append((b, t))
            if t.raw_score > max_raw:
                max_raw = t.raw_score
    out = []
    for b, t in matched:
        norm = t.raw_score / max_raw if max_raw > 0 else 0.0
        out.append((b, norm))
    return out


def _join_combination(match_lists: list[list[tuple[dict[str, str], float]]],
                      weights: list[float]) -> list[tuple[tuple, dict[str, str], float]]:
    """Nested-loop join of per-pattern match lists; scores are weighted sums."""
    results: list[tuple[tuple, dict[str, str], float]] = []

    def recurse(i: int, binding: dict[str, str], score: float):
        if i == len(match_lists):
            key = tuple(sorted(binding.items()))
            results.append((key, binding, score))
            return
        for b, norm in match_lists[i]:
            merged = dict(binding)
            ok = True
            for var, val in b.items():
                if merged.setdefault(var, val) != val:
                    ok = False
                    break
            if ok:
                recurse(i + 1, merged, score + weights[i] * norm)

    recurse(0, {}, 0.0)
    return results


def oracle_topk(query: TripleQuery, rules: RuleSet, store: TripleStore,
                k: int) -> list[OracleAnswer]:
    """Exact top-k answers with max-over-combinations scoring.

    Ties are broken by lexicographic binding order, so the output is a
    deterministic function of the inputs alone.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    choices: list[list[tuple[TriplePattern, float]]] = []
    for p in query.patterns:
        choices.append([(p, 1.0)] + rules.relaxations_for(p))
    n_combos = 1
    for c in choices:
        n_combos *= len(c)
    cost = n_combos * max(len(store), 1)
    if cost > COMBINATION_GUARD:
        raise OracleGuardError(
            f"{n_combos} combinations x {len(store)} triples = {cost} exceeds "
            f"guard {COMBINATION_GUARD}")

    match_cache: dict[str, list[tuple[dict[str, str], float]]] = {}

    def matches(p: TriplePattern) -> list[tuple[dict[str, str], float]]:
        key = str(p)
        if key not in match_cache:
            match_cache[key] = _filter_matches(store, p)
        return match_cache[key]

    best: dict[tuple, tuple[float, dict[str, str], tuple[tuple[str, float], ...]]] = {}
    for combo in itertools.product(*choices):
        pats = [p for p, _ in combo]
        weights = [w for _, w in combo]
        cert = tuple((str(p), w) for p, w in combo)
        lists = [matches(p) for p in pats]
        if any(not lst for lst in lists):
            continue
        for key, binding, score in _join_combination(lists, weights):
            prev = best.get(key)
            if prev is None or score > prev[0]:
                best[key] = (score, binding, cert)

    ranked = sorted(best.items(), key=lambda item: (-item[1][0], item[0]))
    return [OracleAnswer(binding=b, score=s, certificate=c)
            for _, (s, b, c) in ranked[:k]]
