"""Top-k triple-pattern queries over scored knowledge graphs.

Supports weighted query relaxation with two execution strategies: an
exhaustive engine that merges every relaxation into the top-k operators,
and a speculative engine that first prunes relaxations using
histogram-based expected-score estimates. A brute-force oracle provides
ground truth for differential testing.
"""

from .store import (ScoredMatch, Triple, TriplePattern, TripleQuery,
                    TripleStore, load_triples)
from .relax import (RuleSet, WeightedRelaxationRule, mine_cooccurrence_rules)
from .scoremodel import (PatternStatsCatalog, PiecewisePdf, TwoBucketHistogram,
                         build_histogram, cdf_eval, convolve, estimate_join_count,
                         expected_score_at_rank, histogram_from_scores,
                         inverse_cdf, pdf_eval, rebucket, scale_histogram)
from .operators import (OperatorStats, ScoredBinding, incremental_merge,
                        rank_join, top_k_sink)
from .planner import PlanDiagnostics, QueryPlan, plan, trinit_plan
from .executor import ENGINE_SPECQP, ENGINE_TRINIT, ExecutionReport, execute, run_query
from .oracle import OracleAnswer, OracleGuardError, oracle_topk
from .bench import QueryMetrics, prediction_accuracy, run_benchmark, score_error

__version__ = "0.1.0"

__all__ = [
    "Triple", "TriplePattern", "TripleQuery", "TripleStore", "ScoredMatch",
    "load_triples",
    "WeightedRelaxationRule", "RuleSet", "mine_cooccurrence_rules",
    "TwoBucketHistogram", "PiecewisePdf", "PatternStatsCatalog",
    "histogram_from_scores", "build_histogram", "pdf_eval", "cdf_eval",
    "inverse_cdf", "convolve", "rebucket", "estimate_join_count",
    "expected_score_at_rank", "scale_histogram",
    "ScoredBinding", "OperatorStats", "incremental_merge", "rank_join",
    "top_k_sink",
    "QueryPlan", "PlanDiagnostics", "plan", "trinit_plan",
    "ENGINE_TRINIT", "ENGINE_SPECQP", "ExecutionReport", "execute", "run_query",
    "OracleAnswer", "OracleGuardError", "oracle_topk",
    "QueryMetrics", "score_error", "prediction_accuracy", "run_benchmark",
]
