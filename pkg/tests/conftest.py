"""Shared fixtures and comparison helpers for the test suite."""

import numpy as np
import pytest

from kgrelax.operators import ScoredBinding
from kgrelax.store import ScoredMatch, Triple, TriplePattern, TripleStore

SCORE_TOL = 1e-9


@pytest.fixture
def music_store():
    """Small fixed store with typed entities for relaxation scenarios."""
    rows = [
        ("nina", "rdf:type", "singer", 90),
        ("elsa", "rdf:type", "singer", 60),
        ("omar", "rdf:type", "singer", 30),
        ("nina", "rdf:type", "lyricist", 40),
        ("vera", "rdf:type", "lyricist", 80),
        ("omar", "rdf:type", "vocalist", 70),
        ("vera", "rdf:type", "vocalist", 20),
        ("elsa", "rdf:type", "guitarist", 50),
        ("nina", "rdf:type", "guitarist", 10),
        ("vera", "rdf:type", "writer", 95),
    ]
    return TripleStore.from_records(rows)


def matches_from_scores(var: str, items) -> list[ScoredMatch]:
    """Build a descending ScoredMatch stream from (value, norm_score) pairs."""
    out = []
    for value, norm in items:
        t = Triple(value, "p", "o", norm)
        out.append(ScoredMatch(binding={var: value}, source_triple=t, norm_score=norm))
    return out


def bindings_from_scores(var: str, items, slot: int = 0) -> list[ScoredBinding]:
    return [ScoredBinding(binding={var: value}, score=score,
                          provenance=((slot, "p", 1.0),))
            for value, score in items]


def nested_loop_answers(store: TripleStore, patterns) -> dict[tuple, float]:
    """Brute-force conjunctive join: binding key -> summed norm score."""
    per_pattern = []
    for pat in patterns:
        matched = [(pat.bind(t), t.raw_score) for t in store.triples
                   if pat.bind(t) is not None]
        max_raw = max((s for _, s in matched), default=0.0)
        per_pattern.append([(b, s / max_raw if max_raw > 0 else 0.0)
                            for b, s in matched])
    results: dict[tuple, float] = {}

    def recurse(i, binding, score):
        if i == len(per_pattern):
            results[tuple(sorted(binding.items()))] = score
            return
        for b, norm in per_pattern[i]:
            merged = dict(binding)
            if all(merged.setdefault(v, x) == x for v, x in b.items()):
                recurse(i + 1, merged, score + norm)

    recurse(0, {}, 0.0)
    return results


def assert_topk_matches_truth(answers, truth, tol=SCORE_TOL):
    """Score multiset within tol; binding sets agree away from the boundary."""
    got = sorted((a.score for a in answers), reverse=True)
    want = [t.score for t in truth]
    assert len(got) == len(want), f"answer count {len(got)} != truth {len(want)}"
    for g, w in zip(got, want):
        assert abs(g - w) <= tol, f"score {g} vs {w}"
    if truth:
        boundary = truth[-1].score
        truth_keys = {t.key for t in truth}
        for a in answers:
            if a.score > boundary + tol:
                assert a.key in truth_keys, f"non-boundary binding {a.key} not in truth"
