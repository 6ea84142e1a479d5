"""Workload runner and quality/efficiency metrics.

Truth is the brute-force oracle when its enumeration guard allows, else
the exhaustive engine run, flagged per row. Precision and recall share the
denominator k and therefore coincide whenever both engines fill k slots.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .executor import ENGINE_SPECQP, ENGINE_TRINIT, run_query
from .operators import ScoredBinding
from .oracle import OracleAnswer, OracleGuardError, oracle_topk
from .planner import PlanDiagnostics
from .relax import RuleSet
from .scoremodel import PatternStatsCatalog
from .store import TripleQuery, TripleStore

SCORE_TIE_TOL = 1e-9

CSV_HEADER = ["query_id", "k", "engine_truth", "precision", "recall",
              "score_err_mean", "score_err_std", "pred_ok", "trinit_ms",
              "specqp_ms", "plan_ms", "trinit_objs", "specqp_objs"]


@dataclass
class QueryMetrics:
    query_id: str
    k: int
    engine_truth: str
    precision: float
    recall: float
    score_err_mean: float
    score_err_std: float
    pred_ok: bool
    trinit_ms: float
    specqp_ms: float
    plan_ms: float
    trinit_objs: int
    specqp_objs: int
    n_patterns: int = 0
    n_relaxed: int = 0

    def row(self) -> list:
        return [self.query_id, self.k, self.engine_truth,
                f"{self.precision:.6f}", f"{self.recall:.6f}",
                f"{self.score_err_mean:.9f}", f"{self.score_err_std:.9f}",
                int(self.pred_ok), f"{self.trinit_ms:.3f}", f"{self.specqp_ms:.3f}",
                f"{self.plan_ms:.3f}", self.trinit_objs, self.specqp_objs]


def score_error(approx: Sequence[float], truth: Sequence[float], k: int) -> tuple[float, float]:
    """Rank-aligned mean absolute score gap; short lists pad with zeros."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    diffs = []
    for i in range(k):
        a = approx[i] if i < len(approx) else 0.0
        t = truth[i] if i < len(truth) else 0.0
        diffs.append(abs(a - t))
    mean = sum(diffs) / k
    std = statistics.pstdev(diffs)
    return mean, std


def binding_precision(approx: Sequence[ScoredBinding],
                      truth_keys: set, boundary_score: float | None, k: int) -> float:
    """Fraction of the approximate top-k that is acceptable against truth.

    A binding counts if it is a true top-k member or its score ties the
    truth boundary within tolerance (interchangeable at the k-th rank).
    """
    hits = 0
    for sb in approx[:k]:
        if sb.key in truth_keys:
            hits += 1
        elif boundary_score is not None and abs(sb.score - boundary_score) <= SCORE_TIE_TOL:
            hits += 1
    return hits / k


def truth_relaxed_patterns(truth: Sequence[OracleAnswer], query: TripleQuery) -> set[str]:
    """Patterns whose relaxed matches appear in any true top-k answer."""
    originals = [str(p) for p in query.patterns]
    out: set[str] = set()
    for ans in truth:
        for slot, (pat, _) in enumerate(ans.certificate):
            if pat != originals[slot]:
                out.add(originals[slot])
    return out


def engine_relaxed_patterns(answers: Sequence[ScoredBinding], query: TripleQuery) -> set[str]:
    """Same as truth_relaxed_patterns but from engine provenance trails."""
    originals = [str(p) for p in query.patterns]
    out: set[str] = set()
    for sb in answers:
        for slot, pat, _ in sb.provenance:
            if pat != originals[slot]:
                out.add(originals[slot])
    return out


def prediction_accuracy(diag: PlanDiagnostics, truth_relaxed: set[str]) -> bool:
    """True only when the planner relaxed exactly the needed patterns."""
    return set(diag.relaxed_patterns) == truth_relaxed


def _timed_runs(query, k, engine, store, rules, catalog, query_id, repeats):
    """Repeat the run, returning the last result and the mean of the last
    max(1, repeats - 2) wall times (warm-cache convention)."""
    walls, plans = [], []
    result = None
    for _ in range(repeats):
        answers, report, diag = run_query(query, k, engine, store, rules,
                                          catalog, query_id)
        walls.append(report.wall_ms)
        plans.append(report.plan_ms)
        result = (answers, report, diag)
    keep = max(1, repeats - 2)
    wall = sum(walls[-keep:]) / keep
    plan_ms = sum(plans[-keep:]) / keep
    return result[0], result[1], result[2], wall, plan_ms


def evaluate_query(query: TripleQuery, store: TripleStore, rules: RuleSet,
                   catalog: PatternStatsCatalog, k: int, query_id: str,
                   repeats: int = 5,
                   truth: Sequence[OracleAnswer] | None = None) -> QueryMetrics:
    """Metrics for one (query, k); `truth` may carry a precomputed oracle list
    of length >= k to avoid re-enumeration across k values."""
    tri_answers, tri_report, _, tri_wall, _ = _timed_runs(
        query, k, ENGINE_TRINIT, store, rules, catalog, query_id, repeats)
    spec_answers, spec_report, diag, spec_wall, plan_ms = _timed_runs(
        query, k, ENGINE_SPECQP, store, rules, catalog, query_id, repeats)

    if truth is None:
        try:
            truth = oracle_topk(query, rules, store, k)
        except OracleGuardError:
            truth = None
    if truth is not None:
        top = truth[:k]
        engine_truth = "oracle"
        truth_scores = [a.score for a in top]
        truth_keys = {a.key for a in top}
        relaxed_true = truth_relaxed_patterns(top, query)
    else:
        engine_truth = "trinit"
        truth_scores = [a.score for a in tri_answers]
        truth_keys = {a.key for a in tri_answers}
        relaxed_true = engine_relaxed_patterns(tri_answers, query)

    boundary = truth_scores[-1] if truth_scores else None
    precision = binding_precision(spec_answers, truth_keys, boundary, k)
    err_mean, err_std = score_error([a.score for a in spec_answers], truth_scores, k)
    pred_ok = prediction_accuracy(diag, relaxed_true)

    return QueryMetrics(
        query_id=query_id, k=k, engine_truth=engine_truth,
        precision=precision, recall=precision,
        score_err_mean=err_mean, score_err_std=err_std, pred_ok=pred_ok,
        trinit_ms=tri_wall, specqp_ms=spec_wall, plan_ms=plan_ms,
        trinit_objs=tri_report.answers_created,
        specqp_objs=spec_report.answers_created,
        n_patterns=len(query.patterns),
        n_relaxed=len(diag.relaxed_patterns) if diag else 0)


def run_benchmark(queries: Sequence[TripleQuery], store: TripleStore,
                  rules: RuleSet, k_values: Sequence[int],
                  out_csv: str | Path | None = None, repeats: int = 5,
                  catalog: PatternStatsCatalog | None = None) -> list[QueryMetrics]:
    """One metrics row per (query, k); optionally writes the CSV artifacts."""
    if catalog is None:
        catalog = PatternStatsCatalog(store)
    rows = []
    for qi, query in enumerate(queries):
        try:
            truth = oracle_topk(query, rules, store, max(k_values))
        except OracleGuardError:
            truth = None
        for k in k_values:
            rows.append(evaluate_query(query, store, rules, catalog, k,
                                       query_id=f"q{qi:03d}", repeats=repeats,
                                       truth=truth))
    if out_csv is not None:
        write_metrics_csv(rows, out_csv)
        write_grouped_csvs(rows, out_csv)
    return rows


def write_metrics_csv(rows: Sequence[QueryMetrics], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.row())


def _grouped(rows: Sequence[QueryMetrics], attr: str):
    groups: dict[tuple[int, int], list[QueryMetrics]] = {}
    for r in rows:
        groups.setdefault((getattr(r, attr), r.k), []).append(r)
    return groups


def write_grouped_csvs(rows: Sequence[QueryMetrics], base_path: str | Path) -> None:
    """Bar-chart data grouped by pattern count and by relaxed-pattern count."""
    base = Path(base_path)
    for attr, suffix in (("n_patterns", "by_patterns"), ("n_relaxed", "by_relaxed")):
        path = base.with_name(base.stem + f".{suffix}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([attr, "k", "queries", "trinit_ms_mean", "specqp_ms_mean",
                             "trinit_objs_mean", "specqp_objs_mean", "precision_mean"])
            for (val, k), grp in sorted(_grouped(rows, attr).items()):
                writer.writerow([
                    val, k, len(grp),
                    f"{sum(r.trinit_ms for r in grp) / len(grp):.3f}",
                    f"{sum(r.specqp_ms for r in grp) / len(grp):.3f}",
                    f"{sum(r.trinit_objs for r in grp) / len(grp):.1f}",
                    f"{sum(r.specqp_objs for r in grp) / len(grp):.1f}",
                    f"{sum(r.precision for r in grp) / len(grp):.6f}",
                ])
