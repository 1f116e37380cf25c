"""Synthetic conversation generator with full ground truth.

A call is a deterministic function of its config: speech turns alternate
with silence gaps, every turn is a run of words separated by short
intra-turn pauses, and every duration snaps to the frame grid so frame
labels are exact.  Each word carries k subword tokens plus one
end-of-word token whose ideal emission times sit at the acoustic end of
their unit; the actual emission time adds a clipped-Gaussian delay,
repaired to be non-decreasing across the stream.  Frames with no token
emission carry a single blank token at the frame time.

Ground truth exposed per call: frame labels (intra-turn pauses count as
nonspeech), optional independently flipped teacher labels, per-frame
feature vectors drawn from two isotropic Gaussians whose means sit
``feature_separability`` apart along axis 0, and reference segments (one
per turn, spanning the whole turn, listing its words).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .streams import (
    CallRecord,
    FrameRecord,
    Label,
    ReferenceSegment,
    TokenEvent,
    TokenKind,
    VadDecision,
)

__all__ = ["SimConfig", "gen_call", "oracle_vad", "corrupt_vad", "resample_features"]

_SYLLABLES = ("ba", "de", "ki", "lo", "mu", "na", "po", "re", "si", "tu", "va", "zo")
# every 3-syllable combination, fixed order: 1728 distinct 6-letter words
_VOCAB = tuple(
    "".join(parts) for parts in itertools.product(_SYLLABLES, repeat=3)
)


@dataclass(frozen=True)
class SimConfig:
    """Knobs for one synthetic call; all ranges are inclusive (min, max)."""

    seed: int = 0
    n_turns: int = 4
    turn_dur_ms: tuple[int, int] = (1200, 2600)
    gap_dur_ms: tuple[int, int] = (1000, 2000)
    word_dur_ms: tuple[int, int] = (400, 700)
    pause_dur_ms: tuple[int, int] = (40, 160)
    subwords_per_word: tuple[int, int] = (3, 6)
    emission_delay: tuple[float, float, float] = (150.0, 50.0, 400.0)
    feature_separability: float = 2.0
    feature_dim: int = 8
    teacher_flip_prob: float = 0.0
    frame_ms: int = 40


def _check_config(cfg: SimConfig) -> None:
    if cfg.frame_ms < 1:
        raise ValueError(f"frame_ms: must be positive, got {cfg.frame_ms}")
    if cfg.n_turns < 1:
        raise ValueError(f"n_turns: must be positive, got {cfg.n_turns}")
    if cfg.feature_dim < 1:
        raise ValueError(f"feature_dim: must be positive, got {cfg.feature_dim}")
    if cfg.feature_separability < 0:
        raise ValueError(
            f"feature_separability: must be non-negative, got {cfg.feature_separability}"
        )
    if not 0.0 <= cfg.teacher_flip_prob < 1.0:
        raise ValueError(
            f"teacher_flip_prob: must lie in [0, 1), got {cfg.teacher_flip_prob}"
        )
    for name in ("turn_dur_ms", "gap_dur_ms", "word_dur_ms", "pause_dur_ms"):
        lo, hi = getattr(cfg, name)
        if lo < 1 or hi < lo:
            raise ValueError(f"{name}: need 1 <= min <= max, got ({lo}, {hi})")
    k_lo, k_hi = cfg.subwords_per_word
    if k_lo < 1 or k_hi < k_lo:
        raise ValueError(
            f"subwords_per_word: need 1 <= min <= max, got ({k_lo}, {k_hi})"
        )
    mean, std, clip_max = cfg.emission_delay
    if mean < 0 or std < 0 or clip_max < 0:
        raise ValueError(
            f"emission_delay: all of (mean, std, clip_max) must be non-negative, "
            f"got {cfg.emission_delay}"
        )


def _snap(ms: int, frame_ms: int) -> int:
    """Round to the nearest frame boundary, at least one frame."""
    return max(frame_ms, ((ms + frame_ms // 2) // frame_ms) * frame_ms)


def _sample_ms(rng: np.random.Generator, bounds: tuple[int, int], frame_ms: int) -> int:
    lo, hi = bounds
    return _snap(int(rng.integers(lo, hi + 1)), frame_ms)


@dataclass(frozen=True)
class _Word:
    text: str
    start_ms: int
    unit_ends: tuple[int, ...]  # absolute end time of each subword unit
    index: int

    @property
    def end_ms(self) -> int:
        return self.unit_ends[-1]


def gen_call(cfg: SimConfig) -> CallRecord:
    """Generate one call; bit-deterministic for a fixed config."""
    _check_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    f = cfg.frame_ms

    words: list[_Word] = []
    turns: list[tuple[int, int, tuple[str, ...]]] = []  # (start, end, word texts)
    t = 0
    word_counter = 0
    for turn_idx in range(cfg.n_turns):
        if turn_idx > 0:
            t += _sample_ms(rng, cfg.gap_dur_ms, f)
        turn_start = t
        target = _sample_ms(rng, cfg.turn_dur_ms, f)
        turn_words: list[str] = []
        while t - turn_start < target:
            if turn_words:
                t += _sample_ms(rng, cfg.pause_dur_ms, f)
            dur = _sample_ms(rng, cfg.word_dur_ms, f)
            k = int(rng.integers(cfg.subwords_per_word[0], cfg.subwords_per_word[1] + 1))
            text = _VOCAB[word_counter % len(_VOCAB)]
            k = min(k, len(text))
            base, extra = divmod(dur, k)
            ends = []
            u = t
            for j in range(k):
                u += base + (1 if j < extra else 0)
                ends.append(u)
            words.append(_Word(text, t, tuple(ends), word_counter))
            turn_words.append(text)
            word_counter += 1
            t = u
        turns.append((turn_start, t, tuple(turn_words)))
    t += _sample_ms(rng, cfg.gap_dur_ms, f)  # tail gap after the last turn
    total_ms = t
    n_frames = total_ms // f

    # ideal token times (subwords at unit ends, EOW at the word end)
    ideal: list[TokenEvent] = []
    for w in words:
        k = len(w.unit_ends)
        base_len, extra_len = divmod(len(w.text), k)
        pos = 0
        for j, end in enumerate(w.unit_ends):
            size = base_len + (1 if j < extra_len else 0)
            ideal.append(
                TokenEvent(end, TokenKind.SUBWORD, w.text[pos : pos + size], w.index)
            )
            pos += size
        ideal.append(TokenEvent(w.end_ms, TokenKind.EOW, "", w.index))

    mean, std, clip_max = cfg.emission_delay
    emitted: list[TokenEvent] = []
    prev_emit = 0
    for tok in ideal:
        delay = float(np.clip(rng.normal(mean, std), 0.0, clip_max))
        emit = tok.emit_time_ms + int(round(delay))
        emit = min(max(emit, prev_emit), total_ms)  # monotone, within the stream
        prev_emit = emit
        emitted.append(
            TokenEvent(emit, tok.kind, tok.text, tok.word_index)
        )

    occupied = {tok.emit_time_ms // f for tok in emitted if tok.emit_time_ms < total_ms}
    blanks = [
        TokenEvent(i * f, TokenKind.BLANK) for i in range(n_frames) if i not in occupied
    ]
    tokens: list[TokenEvent] = []
    bi = ei = 0
    while bi < len(blanks) or ei < len(emitted):
        if ei >= len(emitted) or (
            bi < len(blanks) and blanks[bi].emit_time_ms <= emitted[ei].emit_time_ms
        ):
            tokens.append(blanks[bi])
            bi += 1
        else:
            tokens.append(emitted[ei])
            ei += 1

    # frame labels: speech exactly inside word intervals (pauses/gaps are not)
    labels = np.zeros(n_frames, dtype=bool)
    for w in words:
        labels[w.start_ms // f : w.end_ms // f] = True

    eps = rng.standard_normal((n_frames, cfg.feature_dim))
    shift = cfg.feature_separability / 2.0
    eps[:, 0] += np.where(labels, shift, -shift)

    flips = rng.random(n_frames) < cfg.teacher_flip_prob

    frames = [
        FrameRecord(
            index=i,
            time_ms=i * f,
            features=eps[i],
            label=Label.SPEECH if labels[i] else Label.NONSPEECH,
            teacher_label=(
                Label.SPEECH if (labels[i] ^ flips[i]) else Label.NONSPEECH
            ),
        )
        for i in range(n_frames)
    ]

    call_id = f"sim-{cfg.seed:08d}"
    segments = [
        ReferenceSegment(call_id, start, end, texts) for start, end, texts in turns
    ]
    return CallRecord(
        call_id=call_id,
        frame_ms=f,
        frames=tuple(frames),
        tokens=tuple(tokens),
        segments=tuple(segments),
    )


def resample_features(
    call: CallRecord, separability: float, seed: int
) -> CallRecord:
    """Replace frame features with fresh class-conditional draws.

    Keeps the call's structure, labels, and tokens; only the feature
    vectors change, drawn at the requested separability.  This swaps the
    feature channel's quality without re-simulating the conversation.
    """
    if separability < 0:
        raise ValueError(
            f"feature_separability: must be non-negative, got {separability}"
        )
    rng = np.random.default_rng(seed)
    n = len(call.frames)
    dim = call.frames[0].features.shape[0] if n else 0
    eps = rng.standard_normal((n, dim))
    shift = separability / 2.0
    frames = []
    for k, fr in enumerate(call.frames):
        if fr.label is None:
            raise ValueError(f"frame {k} has no label")
        row = eps[k]
        row[0] += shift if fr.label is Label.SPEECH else -shift
        frames.append(
            FrameRecord(fr.index, fr.time_ms, row, fr.label, fr.teacher_label)
        )
    return CallRecord(
        call_id=call.call_id,
        frame_ms=call.frame_ms,
        frames=tuple(frames),
        tokens=call.tokens,
        segments=call.segments,
    )


def oracle_vad(call: CallRecord) -> list[VadDecision]:
    """Perfect decisions straight from ground-truth labels."""
    out = []
    for k, fr in enumerate(call.frames):
        if fr.label is None:
            raise ValueError(f"frame {k} has no label")
        is_speech = fr.label is Label.SPEECH
        out.append(VadDecision(fr.index, fr.time_ms, 1.0 if is_speech else 0.0, is_speech))
    return out


def corrupt_vad(
    decisions: Sequence[VadDecision], target_eer: float, seed: int
) -> list[VadDecision]:
    """Flip each decision independently with probability target_eer.

    Flipping both classes at the same rate puts the empirical operating
    point at fpr ~= fnr ~= target_eer.  Unflipped decisions pass through
    untouched; flipped ones get a hard posterior matching the new side.
    """
    if not 0.0 <= target_eer < 0.5:
        raise ValueError(f"target_eer: must lie in [0, 0.5), got {target_eer}")
    rng = np.random.default_rng(seed)
    out: list[VadDecision] = []
    for dec in decisions:
        if rng.random() < target_eer:
            flipped = not dec.is_speech
            out.append(
                VadDecision(dec.frame_index, dec.time_ms, float(flipped), flipped)
            )
        else:
            out.append(dec)
    return out
