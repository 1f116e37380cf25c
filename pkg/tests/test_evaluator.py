"""Tests for event alignment, PRF/WER/latency scoring, and pooling."""

import math

import numpy as np
import pytest

from endpoint_rt.endpointer import EndpointEvent, Trigger
from endpoint_rt.evaluator import (
    CallScore,
    EvalConfig,
    align_events,
    latency_stats,
    pool_scores,
    prf,
    score_call,
    tradeoff,
    wer,
)

from oracles import brute_edit_counts, exhaustive_match

CFG = EvalConfig(ts_threshold_ms=200, tolerance_ms=200)


# ---------------------------------------------------------------------------
# alignment


def test_align_one_to_one_earliest_first():
    m = align_events([1000, 3000], [1100, 1150, 3100], CFG)
    assert m.pairs == ((0, 0, 100), (1, 2, 100))
    assert m.unmatched_refs == ()
    assert m.unmatched_hyps == (1,)
    assert (m.hits, m.misses, m.false_alarms) == (2, 0, 1)


def test_align_window_is_tolerance_before_and_delta_plus_tolerance_after():
    # window for r=1000 is [800, 1400]
    assert align_events([1000], [799], CFG).pairs == ()
    assert align_events([1000], [800], CFG).pairs == ((0, 0, -200),)
    assert align_events([1000], [1400], CFG).pairs == ((0, 0, 400),)
    assert align_events([1000], [1401], CFG).pairs == ()


def test_align_accepts_endpoint_events_or_raw_times():
    eps = [EndpointEvent(1100, Trigger.TS, 900)]
    assert align_events([1000], eps, CFG).pairs == ((0, 0, 100),)


def test_align_empty_sides():
    m = align_events([], [100, 200], CFG)
    assert (m.hits, m.misses, m.false_alarms) == (0, 0, 2)
    m = align_events([100, 900], [], CFG)
    assert (m.hits, m.misses, m.false_alarms) == (0, 2, 0)


def test_align_rejects_unsorted_input():
    with pytest.raises(ValueError, match="ref_ends unsorted: first inversion at index 1"):
        align_events([500, 100], [], CFG)
    with pytest.raises(ValueError, match="hyps unsorted: first inversion at index 2"):
        align_events([], [100, 300, 200], CFG)


def test_align_matches_exhaustive_oracle():
    rng = np.random.default_rng(41)
    for _ in range(200):
        delta = int(rng.choice([200, 400]))
        tol = int(rng.choice([100, 200]))
        refs = sorted(int(x) for x in rng.integers(0, 4000, size=rng.integers(0, 7)))
        hyps = sorted(int(x) for x in rng.integers(0, 4000, size=rng.integers(0, 7)))
        m = align_events(refs, hyps, EvalConfig(delta, tol))
        want_hits, _ = exhaustive_match(refs, hyps, delta, tol)
        assert m.hits == want_hits


def test_align_hits_grow_with_tolerance():
    rng = np.random.default_rng(43)
    for _ in range(50):
        refs = sorted(int(x) for x in rng.integers(0, 3000, size=5))
        hyps = sorted(int(x) for x in rng.integers(0, 3000, size=5))
        hits = [
            align_events(refs, hyps, EvalConfig(200, tol)).hits for tol in (50, 150, 400)
        ]
        assert hits[0] <= hits[1] <= hits[2]


# ---------------------------------------------------------------------------
# precision / recall / F1


def test_prf_from_spec_alignment_example():
    result = prf(align_events([1000, 3000], [1100, 1150, 3100], CFG))
    assert result.precision == pytest.approx(2 / 3)
    assert result.recall == pytest.approx(1.0)
    assert result.f1 == pytest.approx(0.8)
    assert result.precision_defined and result.recall_defined


def test_prf_flags_undefined_ratios():
    no_hyp = prf(align_events([1000], [], CFG))
    assert not no_hyp.precision_defined
    assert no_hyp.recall_defined
    assert (no_hyp.precision, no_hyp.recall, no_hyp.f1) == (0.0, 0.0, 0.0)

    no_ref = prf(align_events([], [1000], CFG))
    assert no_ref.precision_defined
    assert not no_ref.recall_defined

    empty = prf(align_events([], [], CFG))
    assert not empty.precision_defined and not empty.recall_defined


def test_prf_iterates_as_triple():
    p, r, f1 = prf(align_events([1000], [1050], CFG))
    assert (p, r, f1) == (1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# word error rate


def test_wer_known_example():
    result = wer(["a", "b", "c", "d"], ["a", "x", "c"])
    assert (result.wer, result.substitutions, result.deletions, result.insertions) == (
        0.5,
        1,
        1,
        0,
    )
    assert result.ref_words == 4
    assert result.defined


def test_wer_identical_is_zero():
    assert wer(["to", "ki", "su"], ["to", "ki", "su"]).wer == 0.0


def test_wer_empty_reference_with_hypothesis_is_infinite():
    result = wer([], ["ghost"])
    assert math.isinf(result.wer)
    assert not result.defined
    assert result.insertions == 1


def test_wer_both_empty_is_zero():
    result = wer([], [])
    assert result.wer == 0.0
    assert result.defined


def test_wer_can_exceed_one():
    assert wer(["a"], ["x", "y", "z"]).wer == 3.0


def test_wer_matches_brute_force_oracle():
    rng = np.random.default_rng(47)
    vocab = ["ka", "zo", "mi", "tu"]
    for _ in range(150):
        ref = [vocab[i] for i in rng.integers(0, 4, size=rng.integers(0, 7))]
        hyp = [vocab[i] for i in rng.integers(0, 4, size=rng.integers(0, 7))]
        got = wer(ref, hyp)
        dist, s, d, i = brute_edit_counts(ref, hyp)
        assert (got.substitutions, got.deletions, got.insertions) == (s, d, i)
        if ref:
            assert got.wer == pytest.approx(dist / len(ref))


# ---------------------------------------------------------------------------
# latency


def test_latency_stats_mean_and_median():
    m = align_events([1000, 2000, 3000], [1100, 2050, 3300], CFG)
    stats = latency_stats(m)
    assert stats.mean_latency_ms == pytest.approx((100 + 50 + 300) / 3)
    assert stats.median_latency_ms == 100
    assert stats.defined


def test_latency_stats_flag_empty_matchings():
    stats = latency_stats(align_events([1000], [], CFG))
    assert not stats.defined
    assert (stats.mean_latency_ms, stats.median_latency_ms) == (0.0, 0.0)


def test_latency_can_be_negative_for_early_endpoints():
    stats = latency_stats(align_events([1000], [900], CFG))
    assert stats.mean_latency_ms == -100


# ---------------------------------------------------------------------------
# per-call scoring and pooling


def test_score_call_collects_all_counts():
    eps = [
        EndpointEvent(1100, Trigger.TS_AND_EOW_IMMEDIATE, 900),
        EndpointEvent(1500, Trigger.DEFERRAL_TIMEOUT, 1300, 400),
    ]
    score = score_call([1000], eps, ["ka", "zo"], ["ka"], CFG)
    assert (score.hits, score.misses, score.false_alarms) == (1, 0, 1)
    assert score.latencies == (100,)
    assert (score.substitutions, score.deletions, score.insertions) == (0, 1, 0)
    assert score.ref_words == 2
    assert score.deferral_timeouts == 1


def test_pool_scores_micro_averages():
    a = CallScore(
        hits=1, misses=1, false_alarms=0, latencies=(100,),
        substitutions=1, deletions=0, insertions=0, ref_words=2,
    )
    b = CallScore(
        hits=3, misses=0, false_alarms=1, latencies=(0, 50, 250),
        substitutions=0, deletions=1, insertions=2, ref_words=6,
        deferral_timeouts=2,
    )
    report = pool_scores([a, b])
    assert report.precision == pytest.approx(4 / 5)
    assert report.recall == pytest.approx(4 / 5)
    assert report.f1 == pytest.approx(4 / 5)
    assert report.wer == pytest.approx((1 + 1 + 2) / 8)
    assert (report.substitutions, report.deletions, report.insertions) == (1, 1, 2)
    assert report.mean_latency_ms == pytest.approx(100.0)
    assert report.median_latency_ms == 75.0
    assert report.deferral_timeouts == 2


def test_pooling_differs_from_averaging_per_call_ratios():
    # one tiny call with terrible WER must not swamp a large good call
    tiny = CallScore(1, 0, 0, (0,), substitutions=1, deletions=0, insertions=0, ref_words=1)
    big = CallScore(1, 0, 0, (0,), substitutions=0, deletions=0, insertions=0, ref_words=99)
    report = pool_scores([tiny, big])
    assert report.wer == pytest.approx(0.01)  # not (1.0 + 0.0) / 2


def test_pool_scores_of_empty_counts():
    report = pool_scores([])
    assert report.precision == 0.0
    assert report.wer == 0.0
    assert report.mean_latency_ms == 0.0


# ---------------------------------------------------------------------------
# configuration and tradeoff assembly


def test_eval_config_rejects_nonpositive_parameters():
    with pytest.raises(ValueError, match="tolerance_ms"):
        EvalConfig(200, 0)
    with pytest.raises(ValueError, match="ts_threshold_ms"):
        EvalConfig(0, 200)


def _report(wer_value=0.1, f1=0.9, lat=100.0):
    return pool_scores(
        [
            CallScore(
                9, 1, 1, (int(lat),) * 9,
                substitutions=1, deletions=0, insertions=0, ref_words=10,
            )
        ]
    )


def test_tradeoff_sorts_rows_by_delta():
    rows = tradeoff([(400, _report()), (200, _report()), (800, _report())])
    assert [row.delta_ms for row in rows] == [200, 400, 800]


def test_tradeoff_rejects_too_few_points():
    with pytest.raises(ValueError, match="at least 2"):
        tradeoff([(200, _report())])


def test_tradeoff_rejects_duplicate_deltas():
    with pytest.raises(ValueError, match=r"duplicate delta values: \[200\]"):
        tradeoff([(200, _report()), (200, _report()), (400, _report())])


def test_tradeoff_row_iterates_in_column_order():
    rows = tradeoff([(200, _report()), (400, _report())])
    delta, lat, wer_value, f1 = rows[0]
    assert delta == 200
    assert lat == rows[0].mean_latency_ms
    assert wer_value == rows[0].wer
    assert f1 == rows[0].f1
