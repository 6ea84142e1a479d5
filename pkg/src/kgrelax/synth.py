"""Randomized fixture generation: scored stores, connected queries, rules.

Everything is driven by a numpy Generator so fixtures are reproducible
from a seed. Stores mix attribute triples (entity, predicate, value) with
entity-to-entity link triples so that both star and chain queries have
matches.
"""

from __future__ import annotations

import numpy as np

from .relax import RuleSet, WeightedRelaxationRule
from .store import TriplePattern, TripleQuery, TripleStore


def _scores(rng: np.random.Generator, n: int, dist: str) -> np.ndarray:
    if dist == "powerlaw":
        return np.round((rng.pareto(1.3, size=n) + 1.0) * 10.0, 4)
    if dist == "uniform":
        return np.round(rng.uniform(1.0, 100.0, size=n), 4)
    if dist == "constant":
        return np.full(n, 7.0)
    raise ValueError(f"unknown score distribution {dist!r}")


def make_store(rng: np.random.Generator, n_triples: int, dist: str = "powerlaw",
               n_predicates: int = 4, values_per_predicate: int = 6,
               link_fraction: float = 0.2) -> TripleStore:
    """Random scored store with attribute and link triples."""
    n_entities = max(8, n_triples // 6)
    entities = [f"e{i}" for i in range(n_entities)]
    preds = [f"p{j}" for j in range(n_predicates)]
    scores = _scores(rng, n_triples, dist)
    records = []
    n_links = int(n_triples * link_fraction)
    for i in range(n_triples):
        s = entities[rng.integers(n_entities)]
        if i < n_links:
            p = "linksTo"
            o = entities[rng.integers(n_entities)]
        else:
            p = preds[rng.integers(n_predicates)]
            o = f"{p}_v{rng.integers(values_per_predicate)}"
        records.append((s, p, o, float(scores[i])))
    return TripleStore.from_records(records)


def make_tweet_store(rng: np.random.Generator, n_tweets: int, vocab_size: int = 12,
                     tags_per_tweet: tuple[int, int] = (1, 5)) -> TripleStore:
    """Entity-term store shaped (tweet-id, hasTag, term) with retweet scores."""
    vocab = [f"t{i}" for i in range(vocab_size)]
    records = []
    lo, hi = tags_per_tweet
    for i in range(n_tweets):
        n_tags = int(rng.integers(lo, hi + 1))
        tags = rng.choice(vocab_size, size=min(n_tags, vocab_size), replace=False)
        score = float(rng.integers(0, 500))
        for t in tags:
            records.append((f"tweet{i}", "hasTag", vocab[t], score))
    return TripleStore.from_records(records)


def _attribute_pairs(store: TripleStore) -> list[tuple[str, str]]:
    pairs = sorted({(t.predicate, t.object) for t in store.triples
                    if t.predicate != "linksTo"})
    return pairs


def make_star_query(rng: np.random.Generator, store: TripleStore,
                    n_patterns: int) -> TripleQuery:
    """Query of (?s, p, v) patterns over one shared subject variable."""
    pairs = _attribute_pairs(store)
    if len(pairs) < n_patterns:
        raise ValueError("store too small for the requested pattern count")
    idx = rng.choice(len(pairs), size=n_patterns, replace=False)
    pats = tuple(TriplePattern("?s", pairs[i][0], pairs[i][1]) for i in sorted(idx))
    return TripleQuery(pats)


def make_chain_query(rng: np.random.Generator, store: TripleStore,
                     n_patterns: int) -> TripleQuery:
    """(?s linksTo ?t) chains capped by one attribute pattern."""
    pairs = _attribute_pairs(store)
    if not pairs or n_patterns < 2:
        return make_star_query(rng, store, n_patterns)
    var_names = ["?s", "?t", "?u", "?w"]
    pats = []
    for i in range(n_patterns - 1):
        pats.append(TriplePattern(var_names[i], "linksTo", var_names[i + 1]))
    p, v = pairs[rng.integers(len(pairs))]
    pats.append(TriplePattern(var_names[n_patterns - 1], p, v))
    return TripleQuery(tuple(pats))


def make_rules(rng: np.random.Generator, store: TripleStore, query: TripleQuery,
               relax_counts: list[int],
               weight_range: tuple[float, float] = (0.2, 1.0)) -> RuleSet:
    """Per-pattern relaxations that swap the object constant, random weights."""
    by_pred: dict[str, list[str]] = {}
    for p, v in _attribute_pairs(store):
        by_pred.setdefault(p, []).append(v)
    rules = []
    for pat, want in zip(query.patterns, relax_counts):
        if want <= 0:
            continue
        if pat.object.startswith("?"):
            continue  # chain link patterns keep their shape
        candidates = [v for v in by_pred.get(pat.predicate, []) if v != pat.object]
        rng.shuffle(candidates)
        for v in candidates[:want]:
            w = round(float(rng.uniform(*weight_range)), 3)
            rules.append(WeightedRelaxationRule(
                domain=TriplePattern("?x", pat.predicate, pat.object),
                range=TriplePattern("?x", pat.predicate, v),
                weight=w))
    return RuleSet(rules)


def make_fixture(rng: np.random.Generator, n_triples: int, n_patterns: int,
                 max_relax: int, dist: str = "powerlaw", chain: bool = False,
                 combo_budget: int = 400, abundant: bool = False,
                 ) -> tuple[TripleStore, TripleQuery, RuleSet]:
    """One (store, query, rules) fixture with a bounded relaxation space.

    `abundant` biases toward queries with many original answers and weak
    relaxations, the regime where speculative pruning actually fires.
    """
    if abundant:
        store = make_store(rng, n_triples, dist, n_predicates=3,
                           values_per_predicate=2, link_fraction=0.0)
        n_patterns = min(n_patterns, 2)
        weight_range = (0.15, 0.55)
    else:
        store = make_store(rng, n_triples, dist)
        weight_range = (0.2, 1.0)
    maker = make_chain_query if chain and n_patterns >= 2 else make_star_query
    query = maker(rng, store, n_patterns)
    relax_counts = [int(rng.integers(0, max_relax + 1)) for _ in query.patterns]
    if abundant:
        relax_counts = [max(c, 1) for c in relax_counts]
    # keep the oracle's combination count affordable
    while np.prod([c + 1 for c in relax_counts]) > combo_budget:
        i = int(np.argmax(relax_counts))
        relax_counts[i] -= 1
    rules = make_rules(rng, store, query, relax_counts, weight_range)
    return store, query, rules


def make_workload(seed: int, n_queries: int = 60, n_triples: int = 2500,
                  ) -> tuple[TripleStore, list[TripleQuery], RuleSet]:
    """Shared store, a mixed query workload, and one deduplicated rule set."""
    rng = np.random.default_rng(seed)
    store = make_store(rng, n_triples, "powerlaw", n_predicates=5,
                       values_per_predicate=5, link_fraction=0.1)
    queries = []
    rule_map: dict[tuple[str, str], WeightedRelaxationRule] = {}
    for qi in range(n_queries):
        n_patterns = 1 + qi % 4
        query = make_star_query(rng, store, n_patterns)
        queries.append(query)
        counts = [int(rng.integers(1, 5)) for _ in query.patterns]
        for rule in make_rules(rng, store, query, counts):
            key = (str(rule.domain.canonical()), str(rule.range.canonical()))
            rule_map.setdefault(key, rule)
    return store, queries, RuleSet(rule_map.values())


def acceptance_fixtures(seed: int, count: int = 200):
    """Deterministic fixture stream covering the documented parameter grid."""
    rng = np.random.default_rng(seed)
    dists = ["powerlaw", "uniform", "constant"]
    for i in range(count):
        if i == 0:
            n_triples = 10_000
        elif i % 17 == 0:
            n_triples = int(rng.integers(1500, 4000))
        else:
            n_triples = int(rng.integers(100, 700))
        n_patterns = 1 + i % 4
        max_relax = i % 11
        dist = dists[i % 3]
        chain = (i % 7 == 0) and n_patterns >= 2
        abundant = i % 4 == 1
        budget = 60 if n_triples > 1000 else 400
        yield make_fixture(rng, n_triples, n_patterns, max_relax, dist,
                           chain=chain, combo_budget=budget, abundant=abundant)
