"""Plan generation: partition validity, relax decisions, fallback rule."""

import numpy as np
import pytest

from kgrelax.planner import PlanError, QueryPlan, plan, trinit_plan
from kgrelax.relax import RuleSet, WeightedRelaxationRule
from kgrelax.scoremodel import PatternStatsCatalog
from kgrelax.store import TriplePattern, TripleQuery, TripleStore
from kgrelax.synth import make_fixture


def rule(dom, rng_, w):
    return WeightedRelaxationRule(TriplePattern.parse(dom), TriplePattern.parse(rng_), w)


def star_store(spec):
    """spec: {(pred, value): [raw scores]} over a shared entity pool."""
    rows = []
    counter = 0
    for (pred, value), scores in spec.items():
        for s in scores:
            rows.append((f"e{counter}", pred, value, s))
            counter += 1
    return TripleStore.from_records(rows)


def abundant_store(n=60):
    """One pattern with n matches plus relaxation targets."""
    rows = [(f"e{i}", "type", "singer", 1000 - i) for i in range(n)]
    rows += [(f"v{i}", "type", "vocalist", 500 - i) for i in range(20)]
    return TripleStore.from_records(rows)


def test_plan_partition_example_shape():
    # three patterns over a shared subject, only the middle one has rules
    rows = [(f"e{i}", "p1", "a", 100 - i) for i in range(30)]
    rows += [(f"e{i}", "p2", "b", 90 - i) for i in range(30)]
    rows += [(f"e{i}", "p3", "c", 80 - i) for i in range(30)]
    rows += [(f"e{i}", "p2", "b2", 70 - i) for i in range(30)]
    store = TripleStore.from_records(rows)
    query = TripleQuery.parse("?s p1 a\n?s p2 b\n?s p3 c")
    rules = RuleSet([rule("?x p2 b", "?x p2 b2", 0.95)])
    catalog = PatternStatsCatalog(store)
    qp, diag = plan(query, 5, rules, catalog)
    assert set(str(p) for p in qp.join_group) == {"?s p1 a", "?s p3 c"}
    assert [str(p) for p in qp.singletons] == ["?s p2 b"]
    assert qp.covers(query)


def test_plan_no_rules_pure_join_group():
    store = abundant_store()
    query = TripleQuery.parse("?s type singer")
    qp, diag = plan(query, 5, RuleSet(), PatternStatsCatalog(store))
    assert qp.singletons == ()
    assert [str(p) for p in qp.join_group] == ["?s type singer"]
    assert diag.decisions[0].reason == "no_rules"


def test_plan_all_relaxed_matches_baseline_shape():
    # original query cannot fill k: every ruled pattern becomes a singleton
    store = star_store({
        ("p1", "a"): [10, 9], ("p1", "a2"): [8, 7, 6],
        ("p2", "b"): [5, 4], ("p2", "b2"): [3, 2],
    })
    query = TripleQuery.parse("?s p1 a\n?s p2 b")
    rules = RuleSet([rule("?x p1 a", "?x p1 a2", 0.9),
                     rule("?x p2 b", "?x p2 b2", 0.8)])
    qp, diag = plan(query, 10, rules, PatternStatsCatalog(store))
    assert diag.fallback
    assert len(qp.singletons) == 2
    assert qp.join_group == ()
    baseline = trinit_plan(query)
    assert set(qp.singletons) == set(baseline.singletons)


def test_plan_prunes_weak_relaxations():
    # plenty of high-scoring original answers; relaxation capped at w=0.2
    store = abundant_store()
    query = TripleQuery.parse("?s type singer")
    rules = RuleSet([rule("?x type singer", "?x type vocalist", 0.2)])
    qp, diag = plan(query, 5, rules, PatternStatsCatalog(store))
    assert qp.singletons == ()
    d = diag.decisions[0]
    assert d.reason == "estimate" and not d.relax
    assert d.e_relaxed_top <= 0.2 < diag.e_original_k


def test_plan_fallback_relaxes_every_ruled_pattern():
    store = abundant_store(n=3)
    query = TripleQuery.parse("?s type singer")
    rules = RuleSet([rule("?x type singer", "?x type vocalist", 0.4)])
    qp, diag = plan(query, 10, rules, PatternStatsCatalog(store))
    assert diag.fallback and diag.n_estimate == 3
    assert [str(p) for p in qp.singletons] == ["?s type singer"]
    assert diag.decisions[0].reason == "fallback"


def test_plan_empty_pattern_without_rules_warns():
    store = abundant_store()
    query = TripleQuery.parse("?s type singer\n?s type nobody")
    qp, diag = plan(query, 5, RuleSet(), PatternStatsCatalog(store))
    assert qp.singletons == ()
    assert any("no matches" in w for w in diag.warnings)


def test_plan_weight_not_above_original_kth_never_selected():
    # single-pattern query: the relaxed top score estimate never exceeds w,
    # so w <= E_Q(k) keeps the pattern in the join group
    store = abundant_store()
    query = TripleQuery.parse("?s type singer")
    catalog = PatternStatsCatalog(store)
    _, diag0 = plan(query, 5, RuleSet(), catalog)
    e_k = plan(query, 5, RuleSet([rule("?x type singer", "?x type vocalist", 0.5)]),
               catalog)[1].e_original_k
    w = e_k  # exactly at the bound
    rules = RuleSet([rule("?x type singer", "?x type vocalist", min(w, 1.0))])
    qp, diag = plan(query, 5, rules, catalog)
    assert qp.singletons == ()


def test_trinit_plan_shapes():
    q3 = TripleQuery.parse("?s p a\n?s q b\n?s r c")
    qp = trinit_plan(q3)
    assert qp.join_group == () and len(qp.singletons) == 3
    assert qp.covers(q3)
    q1 = TripleQuery.parse("?s p a")
    assert len(trinit_plan(q1).singletons) == 1


def test_queryplan_rejects_overlap():
    p = TriplePattern.parse("?s p a")
    with pytest.raises(PlanError):
        QueryPlan(join_group=(p,), singletons=(p,))


def test_plan_rejects_bad_k():
    store = abundant_store()
    with pytest.raises(PlanError):
        plan(TripleQuery.parse("?s type singer"), 0, RuleSet(), PatternStatsCatalog(store))


# ----------------------------------------------------------------------
# properties on random fixtures

def test_plan_partition_valid_on_random_fixtures():
    rng = np.random.default_rng(77)
    for _ in range(25):
        store, query, rules = make_fixture(rng, int(rng.integers(60, 300)),
                                           int(rng.integers(1, 5)), 5)
        qp, _ = plan(query, int(rng.integers(1, 25)), rules, PatternStatsCatalog(store))
        assert qp.covers(query)
        assert not (set(qp.join_group) & set(qp.singletons))


def test_plan_monotone_in_k():
    rng = np.random.default_rng(78)
    for _ in range(20):
        store, query, rules = make_fixture(rng, int(rng.integers(60, 400)),
                                           int(rng.integers(1, 4)), 4)
        catalog = PatternStatsCatalog(store)
        relaxed_prev: set = set()
        for k in (1, 5, 10, 20):
            _, diag = plan(query, k, rules, catalog)
            relaxed = set(diag.relaxed_patterns)
            assert relaxed_prev <= relaxed, f"k={k}: {relaxed_prev} not <= {relaxed}"
            relaxed_prev = relaxed


def test_plan_decisions_reproducible_from_diagnostics():
    rng = np.random.default_rng(79)
    for _ in range(20):
        store, query, rules = make_fixture(rng, int(rng.integers(60, 400)),
                                           int(rng.integers(1, 4)), 4)
        _, diag = plan(query, int(rng.integers(1, 20)), rules,
                       PatternStatsCatalog(store))
        for d in diag.decisions:
            if d.reason == "no_rules":
                assert not d.relax
            elif d.reason == "fallback":
                assert d.relax and diag.fallback
            elif d.reason == "relaxed_empty":
                assert not d.relax
            else:
                assert d.relax == (d.e_relaxed_top > diag.e_original_k)


def test_diagnostics_json_serializable():
    store = abundant_store()
    query = TripleQuery.parse("?s type singer")
    rules = RuleSet([rule("?x type singer", "?x type vocalist", 0.4)])
    _, diag = plan(query, 5, rules, PatternStatsCatalog(store))
    import json
    payload = json.loads(diag.to_json())
    assert payload["k"] == 5
    assert len(payload["decisions"]) == 1
