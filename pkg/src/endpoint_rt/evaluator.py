"""Scoring for endpoint detection: alignment, P/R/F1, WER, latency, trade-offs.

Detected endpoints are aligned to reference turn ends with a tolerance
window, one-to-one and in order.  A hypothesis at time h matches a
reference end r iff ``r - tol <= h <= r + delta + tol``: the left edge is
the scoring tolerance and the right edge additionally credits the delta
milliseconds of trailing silence every rule is required to wait out.
Latency is reported against r itself, so latency numbers stay comparable
across delta values even though the match window widens.

Word error rate is computed call-level: the committed words of all turns
are concatenated and compared against the reference word sequence with
unit-cost edit distance.  Counts from many calls pool before any ratio
is formed (micro-averaging), matching corpus-level scoring practice.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

from ._kernels import edit_distance_counts
from .endpointer import EndpointEvent, Trigger

__all__ = [
    "EvalConfig",
    "Matching",
    "PrfResult",
    "WerResult",
    "LatencyStats",
    "CallScore",
    "EvalReport",
    "TradeoffRow",
    "align_events",
    "prf",
    "wer",
    "latency_stats",
    "score_call",
    "pool_scores",
    "tradeoff",
]


@dataclass(frozen=True)
class EvalConfig:
    """Alignment parameters: scoring tolerance and the delta under test."""

    ts_threshold_ms: int
    tolerance_ms: int = 200

    def __post_init__(self) -> None:
        if self.tolerance_ms <= 0:
            raise ValueError(f"tolerance_ms: must be positive, got {self.tolerance_ms}")
        if self.ts_threshold_ms <= 0:
            raise ValueError(
                f"ts_threshold_ms: must be positive, got {self.ts_threshold_ms}"
            )


@dataclass(frozen=True)
class Matching:
    """One-to-one alignment: matched (ref, hyp, latency) plus leftovers."""

    pairs: tuple[tuple[int, int, int], ...]
    unmatched_refs: tuple[int, ...]
    unmatched_hyps: tuple[int, ...]

    @property
    def hits(self) -> int:
        return len(self.pairs)

    @property
    def misses(self) -> int:
        return len(self.unmatched_refs)

    @property
    def false_alarms(self) -> int:
        return len(self.unmatched_hyps)


@dataclass(frozen=True)
class PrfResult:
    """Precision/recall/F1 with explicit undefined-denominator flags.

    Iterates as the (precision, recall, f1) triple; an undefined ratio is
    reported as 0 with its ``*_defined`` flag cleared.
    """

    precision: float
    recall: float
    f1: float
    precision_defined: bool = True
    recall_defined: bool = True

    def __iter__(self) -> Iterator[float]:
        return iter((self.precision, self.recall, self.f1))


@dataclass(frozen=True)
class WerResult:
    """Word error rate with its raw edit counts.

    Iterates as (wer, substitutions, deletions, insertions).  An empty
    reference against a nonempty hypothesis has no finite rate: wer is
    +inf and ``defined`` is False while the counts stay exact.
    """

    wer: float
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int
    defined: bool = True

    def __iter__(self) -> Iterator[float]:
        return iter((self.wer, self.substitutions, self.deletions, self.insertions))


@dataclass(frozen=True)
class LatencyStats:
    """Mean/median latency over matched pairs; flagged when nothing matched."""

    mean_latency_ms: float
    median_latency_ms: float
    defined: bool = True

    def __iter__(self) -> Iterator[float]:
        return iter((self.mean_latency_ms, self.median_latency_ms))


@dataclass(frozen=True)
class CallScore:
    """Poolable per-call counts; ratios are only formed after pooling."""

    hits: int
    misses: int
    false_alarms: int
    latencies: tuple[int, ...]
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int
    deferral_timeouts: int = 0


@dataclass(frozen=True)
class EvalReport:
    """Scores for one (mode, delta) configuration over a call set."""

    precision: float
    recall: float
    f1: float
    wer: float
    substitutions: int
    deletions: int
    insertions: int
    mean_latency_ms: float
    median_latency_ms: float
    deferral_timeouts: int


class TradeoffRow:
    """One point of a latency/accuracy curve, ordered by delta."""

    __slots__ = ("delta_ms", "mean_latency_ms", "wer", "f1")

    def __init__(self, delta_ms: int, mean_latency_ms: float, wer: float, f1: float):
        self.delta_ms = delta_ms
        self.mean_latency_ms = mean_latency_ms
        self.wer = wer
        self.f1 = f1

    def __iter__(self) -> Iterator[float]:
        return iter((self.delta_ms, self.mean_latency_ms, self.wer, self.f1))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"TradeoffRow(delta_ms={self.delta_ms}, "
            f"mean_latency_ms={self.mean_latency_ms}, wer={self.wer}, f1={self.f1})"
        )


def _hyp_times(hyps: Sequence[Union[EndpointEvent, int]]) -> list[int]:
    return [h.time_ms if isinstance(h, EndpointEvent) else int(h) for h in hyps]


def align_events(
    ref_ends: Sequence[int],
    hyps: Sequence[Union[EndpointEvent, int]],
    cfg: EvalConfig,
) -> Matching:
    """Greedy in-order one-to-one alignment of endpoints to reference ends.

    Both inputs must be sorted.  Walking the references in order, each
    takes the earliest still-unmatched hypothesis inside its window
    ``[r - tol, r + delta + tol]``.  On these staircase-shaped windows the
    greedy pairing attains the optimal hit count.
    """
    times = _hyp_times(hyps)
    for seq, name in ((list(ref_ends), "ref_ends"), (times, "hyps")):
        for i in range(1, len(seq)):
            if seq[i] < seq[i - 1]:
                raise ValueError(f"{name} unsorted: first inversion at index {i}")

    lo_off = -cfg.tolerance_ms
    hi_off = cfg.ts_threshold_ms + cfg.tolerance_ms
    pairs: list[tuple[int, int, int]] = []
    unmatched_refs: list[int] = []
    unmatched_hyps: list[int] = []
    j = 0
    for i, r in enumerate(ref_ends):
        while j < len(times) and times[j] < r + lo_off:
            unmatched_hyps.append(j)
            j += 1
        if j < len(times) and times[j] <= r + hi_off:
            pairs.append((i, j, times[j] - r))
            j += 1
        else:
            unmatched_refs.append(i)
    unmatched_hyps.extend(range(j, len(times)))
    return Matching(tuple(pairs), tuple(unmatched_refs), tuple(unmatched_hyps))


def _prf_from_counts(hits: int, misses: int, false_alarms: int) -> PrfResult:
    n_hyp = hits + false_alarms
    n_ref = hits + misses
    p_defined = n_hyp > 0
    r_defined = n_ref > 0
    p = hits / n_hyp if p_defined else 0.0
    r = hits / n_ref if r_defined else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return PrfResult(p, r, f1, p_defined, r_defined)


def prf(matching: Matching) -> PrfResult:
    """Precision, recall, and F1 for one matching."""
    return _prf_from_counts(matching.hits, matching.misses, matching.false_alarms)


def wer(ref_words: Sequence[str], hyp_words: Sequence[str]) -> WerResult:
    """Word error rate (S + D + I) / |ref| with minimal unit-cost edits."""
    ids: dict[str, int] = {}
    for word in ref_words:
        ids.setdefault(word, len(ids))
    for word in hyp_words:
        ids.setdefault(word, len(ids))
    _, s, d, i = edit_distance_counts(
        [ids[w] for w in ref_words], [ids[w] for w in hyp_words]
    )
    n = len(ref_words)
    if n == 0:
        if i == 0:
            return WerResult(0.0, 0, 0, 0, 0)
        return WerResult(float("inf"), s, d, i, 0, defined=False)
    return WerResult((s + d + i) / n, s, d, i, n)


def latency_stats(matching: Matching) -> LatencyStats:
    """Mean and median signed latency over matched pairs only."""
    lats = [lat for _, _, lat in matching.pairs]
    if not lats:
        return LatencyStats(0.0, 0.0, defined=False)
    return LatencyStats(statistics.fmean(lats), float(statistics.median(lats)))


def score_call(
    ref_ends: Sequence[int],
    endpoints: Sequence[Union[EndpointEvent, int]],
    ref_words: Sequence[str],
    hyp_words: Sequence[str],
    cfg: EvalConfig,
) -> CallScore:
    """All poolable counts for a single call."""
    m = align_events(ref_ends, endpoints, cfg)
    w = wer(ref_words, hyp_words)
    timeouts = sum(
        1
        for e in endpoints
        if isinstance(e, EndpointEvent) and e.trigger is Trigger.DEFERRAL_TIMEOUT
    )
    return CallScore(
        hits=m.hits,
        misses=m.misses,
        false_alarms=m.false_alarms,
        latencies=tuple(lat for _, _, lat in m.pairs),
        substitutions=w.substitutions,
        deletions=w.deletions,
        insertions=w.insertions,
        ref_words=w.ref_words if w.ref_words else len(ref_words),
        deferral_timeouts=timeouts,
    )


def pool_scores(scores: Sequence[CallScore]) -> EvalReport:
    """Micro-average: sum counts across calls, then form every ratio once."""
    hits = sum(s.hits for s in scores)
    misses = sum(s.misses for s in scores)
    fas = sum(s.false_alarms for s in scores)
    subs = sum(s.substitutions for s in scores)
    dels = sum(s.deletions for s in scores)
    ins = sum(s.insertions for s in scores)
    ref_n = sum(s.ref_words for s in scores)
    lats: list[int] = []
    for s in scores:
        lats.extend(s.latencies)
    p = _prf_from_counts(hits, misses, fas)
    errors = subs + dels + ins
    if ref_n > 0:
        pooled_wer = errors / ref_n
    else:
        pooled_wer = 0.0 if errors == 0 else float("inf")
    if lats:
        mean_lat = statistics.fmean(lats)
        med_lat = float(statistics.median(lats))
    else:
        mean_lat = med_lat = 0.0
    return EvalReport(
        precision=p.precision,
        recall=p.recall,
        f1=p.f1,
        wer=pooled_wer,
        substitutions=subs,
        deletions=dels,
        insertions=ins,
        mean_latency_ms=mean_lat,
        median_latency_ms=med_lat,
        deferral_timeouts=sum(s.deferral_timeouts for s in scores),
    )


def tradeoff(reports: Sequence[tuple[int, EvalReport]]) -> list[TradeoffRow]:
    """Sort per-delta reports into latency/accuracy curve rows."""
    if len(reports) < 2:
        raise ValueError("tradeoff needs at least 2 distinct delta values")
    deltas = [d for d, _ in reports]
    if len(set(deltas)) != len(deltas):
        dupes = sorted({d for d in deltas if deltas.count(d) > 1})
        raise ValueError(f"duplicate delta values: {dupes}")
    rows = [
        TradeoffRow(d, rep.mean_latency_ms, rep.wer, rep.f1)
        for d, rep in sorted(reports, key=lambda dr: dr[0])
    ]
    return rows
