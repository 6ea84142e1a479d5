"""Lower a query plan to an operator tree and run it for top-k answers.

Join-group patterns become bare sorted scans joined left-deep by rank
joins; each singleton becomes an incremental merge over the pattern and
all its relaxations. Streams are ordered ascending by match count so the
cheapest inputs sit deepest, uniformly for both engines.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Iterator

from .operators import (CountingIterator, OperatorStats, ScoredBinding,
                        incremental_merge, rank_join, top_k_sink)
from .planner import PlanDiagnostics, QueryPlan, plan as plan_speculative, trinit_plan
from .relax import RuleSet
from .scoremodel import PatternStatsCatalog
from .store import TriplePattern, TripleQuery, TripleStore

ENGINE_TRINIT = "trinit"
ENGINE_SPECQP = "specqp"


class PlanInvalidError(ValueError):
    pass


@dataclass
class ExecutionReport:
    query_id: str
    engine: str
    k: int
    plan: dict
    wall_ms: float = 0.0
    plan_ms: float = 0.0
    answers_created: int = 0
    answers_returned: int = 0
    operator_pulls: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "query_id": self.query_id,
            "engine": self.engine,
            "k": self.k,
            "plan": self.plan,
            "wall_ms": self.wall_ms,
            "plan_ms": self.plan_ms,
            "answers_created": self.answers_created,
            "answers_returned": self.answers_returned,
        }, sort_keys=True)


def _scan_stream(store: TripleStore, pattern: TriplePattern, slot: int,
                 stats: OperatorStats) -> Iterator[ScoredBinding]:
    label = str(pattern)
    for sm in store.scan_sorted(pattern):
        sb = ScoredBinding(binding=sm.binding, score=sm.norm_score,
                           provenance=((slot, label, 1.0),))
        stats.bump()
        yield sb


def execute(plan: QueryPlan, store: TripleStore, rules: RuleSet, k: int,
            query_id: str = "", engine: str = ENGINE_SPECQP,
            ) -> tuple[list[ScoredBinding], ExecutionReport]:
    """Run the plan and return (ranked answers, report)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not plan.patterns:
        raise PlanInvalidError("empty plan")
    for p in plan.patterns:
        if p.n_constants == 0:
            raise PlanInvalidError(f"plan pattern unservable by the store: {p}")
    stats = OperatorStats()
    report = ExecutionReport(query_id=query_id, engine=engine, k=k,
                             plan=plan.describe())
    slots = {p: i for i, p in enumerate(plan.patterns)}
    t0 = time.perf_counter()

    def scan_count(p: TriplePattern) -> int:
        return store.match_count(p)

    def merged_count(p: TriplePattern) -> int:
        return scan_count(p) + sum(store.match_count(r) for r, _ in rules.relaxations_for(p))

    streams: list[tuple[CountingIterator, set[str], str]] = []
    for p in sorted(plan.join_group, key=lambda p: (scan_count(p), str(p))):
        ci = CountingIterator(_scan_stream(store, p, slots[p], stats))
        streams.append((ci, set(p.variables), f"scan[{p}]"))
    for p in sorted(plan.singletons, key=lambda p: (merged_count(p), str(p))):
        inputs = [(store.scan_sorted(p), 1.0, p)]
        for rpat, w in rules.relaxations_for(p):
            inputs.append((store.scan_sorted(rpat), w, rpat))
        ci = CountingIterator(incremental_merge(inputs, slots[p], stats))
        streams.append((ci, set(p.variables), f"merge[{p}]"))

    acc, acc_vars, _ = streams[0]
    for ci, vars_, label in streams[1:]:
        jv = acc_vars & vars_
        acc = CountingIterator(rank_join(acc, ci, jv, k, stats))
        acc_vars = acc_vars | vars_
    answers = top_k_sink(acc, k)

    report.wall_ms = (time.perf_counter() - t0) * 1000.0
    report.answers_created = stats.answers_created
    report.answers_returned = len(answers)
    report.operator_pulls = {label: ci.pulls for ci, _, label in streams}
    return answers, report


def run_query(query: TripleQuery, k: int, engine: str, store: TripleStore,
              rules: RuleSet, catalog: PatternStatsCatalog | None = None,
              query_id: str = "",
              ) -> tuple[list[ScoredBinding], ExecutionReport, PlanDiagnostics | None]:
    """Plan and execute with the chosen engine; specqp reports plan time separately."""
    if engine == ENGINE_TRINIT:
        qp = trinit_plan(query, k)
        answers, report = execute(qp, store, rules, k, query_id, engine)
        return answers, report, None
    if engine == ENGINE_SPECQP:
        if catalog is None:
            catalog = PatternStatsCatalog(store)
        t0 = time.perf_counter()
        qp, diag = plan_speculative(query, k, rules, catalog)
        plan_ms = (time.perf_counter() - t0) * 1000.0
        answers, report = execute(qp, store, rules, k, query_id, engine)
        report.plan_ms = plan_ms
        return answers, report, diag
    raise ValueError(f"unknown engine {engine!r} (expected trinit or specqp)")
