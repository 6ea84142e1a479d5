"""Command-line surface: ingest, rule mining, stats, querying, benchmarking.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import run_benchmark
from .executor import ENGINE_SPECQP, ENGINE_TRINIT, run_query
from .oracle import OracleGuardError, oracle_topk
from .relax import RuleSet, mine_cooccurrence_rules
from .scoremodel import PatternStatsCatalog
from .store import TripleParseError, TripleQuery, TripleStore, load_triples

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

STATS_FILENAME = "stats.tsv"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="kgrelax", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a triples TSV into a store directory")
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mine-rules", help="mine co-occurrence relaxation rules")
    p.add_argument("--store", required=True)
    p.add_argument("--min-weight", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="prebuild the pattern statistics sidecar")
    p.add_argument("--store", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--rules", default=None)

    p = sub.add_parser("query", help="run one query and print ranked answers")
    p.add_argument("--store", required=True)
    p.add_argument("--rules", default=None)
    p.add_argument("--engine", choices=[ENGINE_TRINIT, ENGINE_SPECQP, "oracle"],
                   default=ENGINE_TRINIT)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--query", required=True)

    p = sub.add_parser("bench", help="run a workload and write metrics CSVs")
    p.add_argument("--store", required=True)
    p.add_argument("--rules", default=None)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", default="10,15,20", help="comma-separated k values")
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=5)

    parser.add_argument("--seed", type=int, default=None,
                        help="seed for randomized fixture utilities")
    return parser


def _open_store(path: str) -> TripleStore:
    p = Path(path)
    try:
        if p.is_dir():
            return TripleStore.open(p)
        return load_triples(p)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    except TripleParseError as exc:
        raise DataError(str(exc)) from exc


def _open_rules(path: str | None) -> RuleSet:
    if path is None:
        return RuleSet()
    try:
        return RuleSet.load(path)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _open_catalog(store_path: str, store: TripleStore) -> PatternStatsCatalog:
    p = Path(store_path)
    sidecar = p / STATS_FILENAME if p.is_dir() else None
    return PatternStatsCatalog(store, sidecar)


def _read_query_blocks(path: str) -> list[TripleQuery]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    blocks, current = [], []
    for line in text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    if not blocks:
        raise DataError(f"no query patterns in {path}")
    try:
        return [TripleQuery.parse("\n".join(b)) for b in blocks]
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _format_binding(binding: dict[str, str]) -> str:
    return " ".join(f"{var}={val}" for var, val in sorted(binding.items()))


def _cmd_ingest(args) -> int:
    store = _open_store(args.triples)
    store.save(args.out)
    print(f"ingested {len(store)} triples into {args.out}")
    return EXIT_OK


def _cmd_mine_rules(args) -> int:
    store = _open_store(args.store)
    try:
        rules = mine_cooccurrence_rules(store, args.min_weight)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    rules.save(args.out)
    print(f"mined {len(rules)} rules into {args.out}")
    return EXIT_OK


def _cmd_stats(args) -> int:
    store = _open_store(args.store)
    rules = _open_rules(args.rules)
    queries = _read_query_blocks(args.queries)
    catalog = _open_catalog(args.store, store)
    for query in queries:
        for pat in query.patterns:
            catalog.get_or_none(pat)
            for rpat, _ in rules.relaxations_for(pat):
                catalog.get_or_none(rpat)
    if catalog.path is not None:
        catalog.save()
        print(f"wrote {len(catalog)} histograms to {catalog.path}")
    else:
        print(f"built {len(catalog)} histograms (store is a flat file; sidecar skipped)")
    return EXIT_OK


def _cmd_query(args) -> int:
    if args.k < 1:
        raise UsageError(f"--k must be >= 1, got {args.k}")
    store = _open_store(args.store)
    rules = _open_rules(args.rules)
    blocks = _read_query_blocks(args.query)
    if len(blocks) != 1:
        raise DataError(f"query file must hold exactly one query, found {len(blocks)}")
    query = blocks[0]
    if args.engine == "oracle":
        try:
            answers = oracle_topk(query, rules, store, args.k)
        except OracleGuardError as exc:
            raise DataError(str(exc)) from exc
        ranked = [(a.score, a.binding) for a in answers]
    else:
        catalog = _open_catalog(args.store, store)
        result, _, _ = run_query(query, args.k, args.engine, store, rules, catalog)
        ranked = [(sb.score, sb.binding) for sb in result]
    for rank, (score, binding) in enumerate(ranked, start=1):
        print(f"{rank}\t{score:.6f}\t{_format_binding(binding)}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    store = _open_store(args.store)
    rules = _open_rules(args.rules)
    queries = _read_query_blocks(args.queries)
    try:
        k_values = [int(tok) for tok in args.k.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"bad --k list: {args.k!r}") from None
    if not k_values or any(k < 1 for k in k_values):
        raise UsageError(f"--k needs positive integers, got {args.k!r}")
    catalog = _open_catalog(args.store, store)
    rows = run_benchmark(queries, store, rules, k_values, out_csv=args.out,
                         repeats=args.repeats, catalog=catalog)
    print(f"wrote {len(rows)} metric rows to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "mine-rules": _cmd_mine_rules,
    "stats": _cmd_stats,
    "query": _cmd_query,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
