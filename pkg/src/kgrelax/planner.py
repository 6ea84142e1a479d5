"""Speculative plan generation: decide per pattern whether to relax.

The planner estimates the score of the k-th answer of the original query
and, for each pattern, the top answer score obtainable by substituting its
top-weighted relaxation. A pattern is relaxed only if the relaxed top
estimate strictly beats the original k-th estimate. When the original
query cannot fill k answers, every pattern that has rules is relaxed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

from .relax import RuleSet
from .scoremodel import (PatternStatsCatalog, TwoBucketHistogram, convolve,
                         estimate_join_count, expected_score_at_rank,
                         rebucket, scale_histogram)
from .store import TriplePattern, TripleQuery


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class QueryPlan:
    """Partition of a query into a non-relaxed join group plus relaxed singletons."""

    join_group: tuple[TriplePattern, ...]
    singletons: tuple[TriplePattern, ...]
    k: int | None = None

    def __post_init__(self):
        overlap = set(self.join_group) & set(self.singletons)
        if overlap:
            raise PlanError(f"patterns in both groups: {overlap}")

    @property
    def patterns(self) -> tuple[TriplePattern, ...]:
        return self.join_group + self.singletons

    def covers(self, query: TripleQuery) -> bool:
        return set(self.patterns) == set(query.patterns) and \
            len(self.patterns) == len(query.patterns)

    def describe(self) -> dict:
        return {
            "join_group": [str(p) for p in self.join_group],
            "singletons": [str(p) for p in self.singletons],
        }


@dataclass(frozen=True)
class PatternDecision:
    pattern: str
    relax: bool
    reason: str  # "estimate", "fallback", "no_rules", "relaxed_empty"
    top_relaxation: str | None = None
    top_weight: float | None = None
    e_relaxed_top: float | None = None
    n_relaxed: int | None = None


@dataclass(frozen=True)
class PlanDiagnostics:
    k: int
    e_original_k: float
    n_estimate: int
    fallback: bool
    decisions: tuple[PatternDecision, ...]
    warnings: tuple[str, ...] = ()

    def to_json(self) -> str:
        payload = {
            "k": self.k,
            "e_original_k": self.e_original_k,
            "n_estimate": self.n_estimate,
            "fallback": self.fallback,
            "warnings": list(self.warnings),
            "decisions": [asdict(d) for d in self.decisions],
        }
        return json.dumps(payload, sort_keys=True)

    @property
    def relaxed_patterns(self) -> tuple[str, ...]:
        return tuple(d.pattern for d in self.decisions if d.relax)


def _fold_distribution(hists: Sequence[TwoBucketHistogram]):
    acc = hists[0]
    for h in hists[1:]:
        acc = convolve(acc, h)
    return acc


def _estimate_top_rank(hists: Sequence[TwoBucketHistogram], n: int, rank: int) -> float:
    """Expected score at `rank` among n answers under the folded distribution."""
    if len(hists) == 1:
        h = hists[0]
        if h.m != n:
            h = TwoBucketHistogram(m=n, sigma_r=h.sigma_r, s_r=h.s_r, s_m=h.s_m, u=h.u)
        return expected_score_at_rank(h, rank)
    folded = _fold_distribution(hists)
    return expected_score_at_rank(rebucket(folded, n), rank)


def plan(query: TripleQuery, k: int, rules: RuleSet,
         catalog: PatternStatsCatalog) -> tuple[QueryPlan, PlanDiagnostics]:
    if k < 1:
        raise PlanError(f"k must be >= 1, got {k}")
    store = catalog.store
    pats = list(query.patterns)
    hists = [catalog.get_or_none(p) for p in pats]
    counts = [store.match_count(p) for p in pats]
    warnings = []

    def fold_count(patterns: list[TriplePattern], pattern_counts: list[int]) -> int:
        if any(c == 0 for c in pattern_counts):
            return 0
        sels = [store.join_selectivity(patterns[:i], patterns[i])
                for i in range(1, len(patterns))]
        return estimate_join_count(pattern_counts, sels)

    n = fold_count(pats, counts)
    fallback = n < k
    if fallback:
        e_original_k = 0.0
    else:
        e_original_k = _estimate_top_rank([h for h in hists if h is not None], n, k)

    decisions = []
    singletons = []
    for i, p in enumerate(pats):
        top = rules.top_relaxation(p)
        if top is None:
            if counts[i] == 0:
                warnings.append(f"pattern has no matches and no relaxations: {p}")
            decisions.append(PatternDecision(pattern=str(p), relax=False, reason="no_rules"))
            continue
        relaxed_pat, w = top
        relaxed_hist = catalog.get_or_none(relaxed_pat)
        n_rel = None
        e_rel = None
        if relaxed_hist is not None:
            sub_pats = pats[:i] + [relaxed_pat] + pats[i + 1:]
            sub_counts = counts[:i] + [store.match_count(relaxed_pat)] + counts[i + 1:]
            sub_hists = hists[:i] + [scale_histogram(relaxed_hist, w)] + hists[i + 1:]
            n_rel = fold_count(sub_pats, sub_counts)
            if n_rel >= 1 and all(h is not None for h in sub_hists):
                e_rel = _estimate_top_rank(sub_hists, n_rel, 1)
        if fallback:
            relax, reason = True, "fallback"
        elif e_rel is None:
            relax, reason = False, "relaxed_empty"
        else:
            relax, reason = e_rel > e_original_k, "estimate"
        decisions.append(PatternDecision(
            pattern=str(p), relax=relax, reason=reason,
            top_relaxation=str(relaxed_pat), top_weight=w,
            e_relaxed_top=e_rel, n_relaxed=n_rel))
        if relax:
            singletons.append(p)

    join_group = tuple(p for p in pats if p not in singletons)
    qp = QueryPlan(join_group=join_group, singletons=tuple(singletons), k=k)
    diag = PlanDiagnostics(k=k, e_original_k=e_original_k, n_estimate=n,
                           fallback=fallback, decisions=tuple(decisions),
                           warnings=tuple(warnings))
    return qp, diag


def trinit_plan(query: TripleQuery, k: int | None = None) -> QueryPlan:
    """Baseline plan: every pattern is a singleton processed by incremental merge."""
    return QueryPlan(join_group=(), singletons=tuple(query.patterns), k=k)
