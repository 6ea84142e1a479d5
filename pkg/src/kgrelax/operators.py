"""Pull-based streaming operators over score-sorted inputs.

incremental_merge unions a pattern's matches with its weighted relaxations
into one descending stream, deduplicating bindings at their best weighted
score. rank_join is a hash rank join with a corner-bound threshold: a
buffered result is released only once no future input combination can beat
it. Both operators pull their inputs lazily.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .store import ScoredMatch, TriplePattern


class SortContractError(RuntimeError):
    """An input stream emitted an increasing score."""


@dataclass
class OperatorStats:
    """Counts ScoredBinding constructions as a memory/work proxy."""

    answers_created: int = 0

    def bump(self) -> None:
        self.answers_created += 1


@dataclass(frozen=True)
class ScoredBinding:
    binding: Mapping[str, str]
    score: float
    # one (slot, pattern, weight) entry per query position this binding covers
    provenance: tuple[tuple[int, str, float], ...] = ()

    @property
    def key(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(self.binding.items()))


class CountingIterator:
    """Wraps a stream and counts successful pulls."""

    __slots__ = ("_it", "pulls")

    def __init__(self, stream: Iterable):
        self._it = iter(stream)
        self.pulls = 0

    def __iter__(self):
        return self

    def __next__(self):
        item = next(self._it)
        self.pulls += 1
        return item


def incremental_merge(
    inputs: Sequence[tuple[Iterator[ScoredMatch], float, TriplePattern]],
    slot: int,
    stats: OperatorStats,
) -> Iterator[ScoredBinding]:
    """Merge (stream, weight, pattern) inputs into one descending stream.

    The first input must be the original pattern at weight 1.0. Each
    distinct binding is emitted once, at its maximum weight * norm_score
    over all inputs. Inputs are pulled only as the consumer demands.
    """
    if not inputs:
        return
    if inputs[0][1] != 1.0:
        raise ValueError("first merge input must be the original pattern at weight 1.0")
    iters = [iter(stream) for stream, _, _ in inputs]
    weights = [w for _, w, _ in inputs]
    labels = [str(p) for _, _, p in inputs]
    last_ws: list[float | None] = [None] * len(inputs)
    heap: list[tuple[float, tuple, int, ScoredBinding]] = []

    def pull(idx: int) -> None:
        nxt = next(iters[idx], None)
        if nxt is None:
            return
        ws = weights[idx] * nxt.norm_score
        prev = last_ws[idx]
        if prev is not None and ws > prev:
            raise SortContractError(
                f"merge input {idx} emitted increasing score {ws} after {prev}")
        last_ws[idx] = ws
        sb = ScoredBinding(binding=nxt.binding, score=ws,
                           provenance=((slot, labels[idx], weights[idx]),))
        stats.bump()
        heapq.heappush(heap, (-ws, sb.key, idx, sb))

    for idx in range(len(inputs)):
        pull(idx)
    emitted: set[tuple] = set()
    while heap:
        _, key, idx, sb = heapq.heappop(heap)
        pull(idx)
        if key in emitted:
            continue
        emitted.add(key)
        yield sb


class _JoinSide:
    __slots__ = ("stream", "top", "last", "done", "table")

    def __init__(self, stream: Iterator[ScoredBinding]):
        self.stream = iter(stream)
        self.top: float | None = None
        self.last: float | None = None
        self.done = False
        self.table: dict[tuple, list[ScoredBinding]] = {}


def rank_join(
    left: Iterator[ScoredBinding],
    right: Iterator[ScoredBinding],
    join_vars: Iterable[str],
    k_hint: int,
    stats: OperatorStats,
) -> Iterator[ScoredBinding]:
    """Join two descending streams, emitting results in descending score.

    Threshold T = max(topL + lastR, lastL + topR), with an exhausted side
    contributing -inf; a buffered result is emitted only when its score
    reaches T. k_hint sizes the caller's demand but never truncates the
    stream: interior joins in a plan tree must stay complete, so consumers
    stop pulling when they have enough.
    """
    jvars = tuple(sorted(join_vars))
    sides = (_JoinSide(left), _JoinSide(right))
    buffer: list[tuple[float, int, ScoredBinding]] = []
    seq = 0

    def pull(i: int) -> None:
        nonlocal seq
        side, other = sides[i], sides[1 - i]
        sb = next(side.stream, None)
        if sb is None:
            side.done = True
            return
        if side.last is not None and sb.score > side.last:
            raise SortContractError(
                f"rank join input {i} emitted increasing score {sb.score} after {side.last}")
        if side.top is None:
            side.top = sb.score
        side.last = sb.score
        key = tuple(sb.binding[v] for v in jvars)
        side.table.setdefault(key, []).append(sb)
        for partner in other.table.get(key, ()):
            l, r = (sb, partner) if i == 0 else (partner, sb)
            merged = dict(l.binding)
            merged.update(r.binding)
            out = ScoredBinding(binding=merged, score=l.score + r.score,
                                provenance=l.provenance + r.provenance)
            stats.bump()
            heapq.heappush(buffer, (-out.score, seq, out))
            seq += 1

    def threshold() -> float:
        l, r = sides
        t = float("-inf")
        if not r.done and l.top is not None and r.last is not None:
            t = max(t, l.top + r.last)
        if not l.done and r.top is not None and l.last is not None:
            t = max(t, r.top + l.last)
        return t

    turn = 0
    pull(0)
    if sides[0].done and sides[0].top is None:
        return  # left empty: no result can ever form
    pull(1)
    if sides[1].done and sides[1].top is None:
        return
    while True:
        t = threshold()
        while buffer and -buffer[0][0] >= t:
            yield heapq.heappop(buffer)[2]
        if sides[0].done and sides[1].done:
            while buffer:
                yield heapq.heappop(buffer)[2]
            return
        # alternate pulls between the two open sides
        turn = 1 - turn
        if sides[turn].done:
            turn = 1 - turn
        pull(turn)


def top_k_sink(stream: Iterator[ScoredBinding], k: int) -> list[ScoredBinding]:
    """First k distinct bindings of a descending stream.

    The first occurrence of a binding carries its maximum score, so
    keep-first dedup is exact.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    out: list[ScoredBinding] = []
    seen: set[tuple] = set()
    for sb in stream:
        if sb.key in seen:
            continue
        seen.add(sb.key)
        out.append(sb)
        if len(out) == k:
            break
    return out


def assert_descending(stream: Iterator[ScoredBinding]) -> Iterator[ScoredBinding]:
    """Pass-through wrapper raising if scores ever increase (test aid)."""
    last = None
    for sb in stream:
        if last is not None and sb.score > last + 1e-12:
            raise SortContractError(f"stream score increased: {sb.score} after {last}")
        last = sb.score
        yield sb
