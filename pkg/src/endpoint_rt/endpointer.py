"""Streaming endpoint detection over a merged VAD + token timeline.

Four rule modes share one state machine:

* ``BLANK``   -- a run of N consecutive blank tokens ends the turn at the
  N-th blank.  VAD decisions are ignored; the run resets (and the machine
  re-arms) on any non-blank token.
* ``TS``      -- a contiguous nonspeech span reaching delta ms ends the
  turn at exactly span-start + delta.  Tokens are ignored.
* ``EOW``     -- inside any nonspeech run (at least one frame) with an
  end-of-word as the last non-blank token seen, the turn ends at
  max(run-start + frame, EOW emit time).
* ``TS_AND_EOW`` -- the TS condition arms the decision at T = start +
  delta.  If the last non-blank token at T is an EOW, the endpoint stands
  at T (immediate).  Otherwise the decision is deferred: a later EOW at
  t3 <= start + cap ends the turn at t3; speech resuming cancels; the
  deadline expiring forces a flagged endpoint at the deadline.

Timing convention: a nonspeech decision at time t covers [t, t + frame),
so a run of k dense frames spans k * frame ms and the TS condition for
delta = k * frame completes while the k-th frame is being processed, with
the endpoint stamped at run-start + delta.

Because an endpoint stamped T may still be reclassified by tokens
emitted at or before T (a token tied with a frame is ordered after it),
EOW-gated decisions are held pending until the first event strictly
after T — or end of stream — and only then emitted.  This is what makes
an EOW landing exactly on T an immediate endpoint rather than a deferred
one, and what keeps EOW-gated endpoints from ever splitting a word whose
subwords straggle in at or before T.

After emitting, the machine disarms until the next speech frame (token
modes: until the next non-blank token), so each maximal nonspeech run
yields at most one endpoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

from .streams import (
    EndOfStream,
    TimelineEvent,
    TokenEvent,
    TokenKind,
    VadDecision,
)

log = logging.getLogger(__name__)


class Mode(str, Enum):
    BLANK = "BLANK"
    TS = "TS"
    EOW = "EOW"
    TS_AND_EOW = "TS_AND_EOW"


class Trigger(str, Enum):
    BLANK_RUN = "BLANK_RUN"
    TS = "TS"
    EOW = "EOW"
    TS_AND_EOW_IMMEDIATE = "TS_AND_EOW_IMMEDIATE"
    TS_AND_EOW_DEFERRED = "TS_AND_EOW_DEFERRED"
    DEFERRAL_TIMEOUT = "DEFERRAL_TIMEOUT"


@dataclass(frozen=True)
class EndpointerConfig:
    mode: Mode
    ts_threshold_ms: int = 200
    blank_run_frames: int = 6
    deferral_cap_ms: int = 1000
    frame_ms: int = 40


@dataclass(frozen=True)
class EndpointEvent:
    """A detected turn end: when, by which rule, and from which silence."""

    time_ms: int
    trigger: Trigger
    silence_start_ms: int
    deferred_by_ms: int = 0


@dataclass(frozen=True)
class TurnTranscript:
    """Words committed to one turn; each word carries its EOW-closed flag."""

    turn_index: int
    start_ms: int
    end_ms: int
    words: tuple[tuple[str, bool], ...] = ()


@dataclass
class _PendingFire:
    """An EOW-gated endpoint stamped at fire_time, awaiting time > fire_time."""

    rule: str  # "eow" | "tseow"
    fire_time: int
    silence_start: int
    eow_time: int = 0
    speech_at_boundary: bool = False


@dataclass
class _Deferral:
    silence_start: int
    trigger_time: int
    deadline: int


def new_endpointer(cfg: EndpointerConfig) -> "Endpointer":
    """Validate a configuration and build a fresh machine from it."""
    if not isinstance(cfg.mode, Mode):
        raise ValueError(f"mode: unknown endpointing mode {cfg.mode!r}")
    if cfg.frame_ms <= 0:
        raise ValueError(f"frame_ms: must be positive, got {cfg.frame_ms}")
    if cfg.ts_threshold_ms <= 0 or cfg.ts_threshold_ms % cfg.frame_ms != 0:
        raise ValueError(
            f"ts_threshold_ms: {cfg.ts_threshold_ms} is not a positive multiple "
            f"of frame_ms={cfg.frame_ms}"
        )
    if cfg.deferral_cap_ms < cfg.ts_threshold_ms:
        raise ValueError(
            f"deferral_cap_ms: {cfg.deferral_cap_ms} is below "
            f"ts_threshold_ms={cfg.ts_threshold_ms}"
        )
    if cfg.blank_run_frames < 1:
        raise ValueError(
            f"blank_run_frames: must be >= 1, got {cfg.blank_run_frames}"
        )
    return Endpointer(cfg)


class Endpointer:
    """Single-pass endpoint detector; feed events in time order via step()."""

    def __init__(self, cfg: EndpointerConfig):
        self.cfg = cfg
        self._last_time: Optional[int] = None
        self._poisoned = False
        self._finished = False
        self._armed = True
        # blank-token run (BLANK mode)
        self._blank_run = 0
        self._blank_run_start = 0
        # nonspeech frame run (VAD modes)
        self._run_start: Optional[int] = None
        self._run_end = 0
        self._run_fired = False
        self._last_nonblank: Optional[tuple[TokenKind, int]] = None
        self._pending: Union[_PendingFire, _Deferral, None] = None

    # -- public -------------------------------------------------------------

    def step(self, event: TimelineEvent) -> Optional[EndpointEvent]:
        """Advance the machine by one timeline event.

        Returns the endpoint the event resolves, if any.  Events must be
        non-decreasing in time; an out-of-order event poisons the state
        and every later call fails.
        """
        if self._poisoned:
            raise RuntimeError("endpointer state is poisoned by an earlier error")
        if self._finished:
            raise RuntimeError("endpointer already saw EndOfStream")
        t = event.time_ms
        if self._last_time is not None and t < self._last_time:
            self._poisoned = True
            raise ValueError(
                f"out-of-order event at {t} ms after {self._last_time} ms"
            )
        self._last_time = t

        out: list[EndpointEvent] = []
        if isinstance(event.payload, EndOfStream):
            self._flush(t, out)
            self._finished = True
        else:
            self._resolve(t, out)
            if isinstance(event.payload, VadDecision):
                self._on_vad(event.payload, t, out)
            elif isinstance(event.payload, TokenEvent):
                self._on_token(event.payload, t, out)
            else:
                self._poisoned = True
                raise ValueError(f"unknown payload type {type(event.payload).__name__}")
            # a condition established by this event may already lie in the
            # past (sparse timelines); settle it against the current clock
            self._resolve(t, out)
        assert len(out) <= 1, "one event can resolve at most one endpoint"
        return out[0] if out else None

    # -- emission helpers ---------------------------------------------------

    def _emit(
        self,
        out: list[EndpointEvent],
        time_ms: int,
        trigger: Trigger,
        silence_start: int,
        deferred_by: int = 0,
    ) -> None:
        out.append(EndpointEvent(time_ms, trigger, silence_start, deferred_by))
        self._armed = False
        log.debug("endpoint %s at %d ms (silence from %d)", trigger, time_ms, silence_start)

    def _consume_eow(self) -> None:
        self._last_nonblank = None

    def _eow_in_hand(self, by_time: int) -> Optional[int]:
        if self._last_nonblank is not None:
            kind, when = self._last_nonblank
            if kind is TokenKind.EOW and when <= by_time:
                return when
        return None

    # -- pending resolution ---------------------------------------------------

    def _resolve(self, now: int, out: list[EndpointEvent]) -> None:
        p = self._pending
        if isinstance(p, _PendingFire) and now > p.fire_time:
            self._adjudicate(p, out)
        p = self._pending
        if isinstance(p, _Deferral) and now > p.deadline:
            self._emit(
                out,
                p.deadline,
                Trigger.DEFERRAL_TIMEOUT,
                p.silence_start,
                p.deadline - p.trigger_time,
            )
            self._pending = None

    def _adjudicate(self, p: _PendingFire, out: list[EndpointEvent]) -> None:
        """Settle a pending fire once the clock has passed its fire time."""
        self._pending = None
        if p.rule == "eow":
            # any cancelling SUBWORD at or before fire_time already cleared
            # the pending entry, so the condition held through fire_time
            self._emit(out, p.fire_time, Trigger.EOW, p.silence_start)
            self._consume_eow()
            return
        eow_time = self._eow_in_hand(p.fire_time)
        if eow_time is not None:
            self._emit(out, p.fire_time, Trigger.TS_AND_EOW_IMMEDIATE, p.silence_start)
            self._consume_eow()
            return
        if p.speech_at_boundary:
            return  # speech resumed the instant the threshold completed
        deferral = _Deferral(
            p.silence_start,
            p.fire_time,
            p.silence_start + self.cfg.deferral_cap_ms,
        )
        # an EOW may already sit between the fire time and the deadline
        # (sparse timelines resolve late); discharge it immediately
        if self._last_nonblank is not None:
            kind, when = self._last_nonblank
            if kind is TokenKind.EOW and deferral.trigger_time < when <= deferral.deadline:
                self._emit(
                    out,
                    when,
                    Trigger.TS_AND_EOW_DEFERRED,
                    deferral.silence_start,
                    when - deferral.trigger_time,
                )
                self._consume_eow()
                return
        self._pending = deferral

    # -- event handlers -------------------------------------------------------

    def _on_vad(self, dec: VadDecision, t: int, out: list[EndpointEvent]) -> None:
        if self.cfg.mode is Mode.BLANK:
            return
        if dec.is_speech:
            if isinstance(self._pending, _Deferral):
                self._pending = None  # speech resumption cancels the deferral
            elif isinstance(self._pending, _PendingFire) and t <= self._pending.fire_time:
                if self._pending.rule == "tseow":
                    self._pending.speech_at_boundary = True
                # an "eow" pending survives: its silence span completed and
                # the closing token is in hand
            self._run_start = None
            self._run_fired = False
            self._armed = True
            return

        if self._run_start is None:
            self._run_start = t
        self._run_end = t + self.cfg.frame_ms
        span = self._run_end - self._run_start

        if self.cfg.mode is Mode.TS:
            if self._armed and not self._run_fired and span >= self.cfg.ts_threshold_ms:
                self._run_fired = True
                self._emit(
                    out,
                    self._run_start + self.cfg.ts_threshold_ms,
                    Trigger.TS,
                    self._run_start,
                )
        elif self.cfg.mode is Mode.TS_AND_EOW:
            if (
                self._armed
                and not self._run_fired
                and self._pending is None
                and span >= self.cfg.ts_threshold_ms
            ):
                self._run_fired = True
                self._pending = _PendingFire(
                    "tseow",
                    self._run_start + self.cfg.ts_threshold_ms,
                    self._run_start,
                )
        elif self.cfg.mode is Mode.EOW:
            self._maybe_arm_eow_fire()

    def _maybe_arm_eow_fire(self) -> None:
        if not (self._armed and self._pending is None and self._run_start is not None):
            return
        if self._last_nonblank is None or self._last_nonblank[0] is not TokenKind.EOW:
            return
        eow_time = self._last_nonblank[1]
        self._pending = _PendingFire(
            "eow",
            max(self._run_start + self.cfg.frame_ms, eow_time),
            self._run_start,
            eow_time=eow_time,
        )

    def _on_token(self, tok: TokenEvent, t: int, out: list[EndpointEvent]) -> None:
        if tok.kind is TokenKind.BLANK:
            if self.cfg.mode is Mode.BLANK:
                if self._blank_run == 0:
                    self._blank_run_start = t
                self._blank_run += 1
                if self._armed and self._blank_run >= self.cfg.blank_run_frames:
                    self._emit(out, t, Trigger.BLANK_RUN, self._blank_run_start)
            return

        if self.cfg.mode is Mode.BLANK:
            self._blank_run = 0
            self._armed = True
            return

        self._last_nonblank = (tok.kind, t)
        if tok.kind is TokenKind.SUBWORD:
            p = self._pending
            if isinstance(p, _PendingFire) and p.rule == "eow" and t <= p.fire_time:
                self._pending = None  # the word reopened before the endpoint stood
            return

        # EOW
        p = self._pending
        if isinstance(p, _Deferral):
            if t <= p.deadline:
                self._emit(
                    out,
                    t,
                    Trigger.TS_AND_EOW_DEFERRED,
                    p.silence_start,
                    t - p.trigger_time,
                )
                self._consume_eow()
                self._pending = None
            return
        if self.cfg.mode is Mode.EOW:
            self._maybe_arm_eow_fire()

    # -- end of stream ----------------------------------------------------------

    def _flush(self, eos_time: int, out: list[EndpointEvent]) -> None:
        p = self._pending
        self._pending = None
        if isinstance(p, _PendingFire):
            if p.rule == "eow":
                self._emit(out, p.fire_time, Trigger.EOW, p.silence_start)
                self._consume_eow()
                return
            eow_time = self._eow_in_hand(p.fire_time)
            if eow_time is not None:
                self._emit(
                    out, p.fire_time, Trigger.TS_AND_EOW_IMMEDIATE, p.silence_start
                )
                self._consume_eow()
                return
            if p.speech_at_boundary:
                return
            deadline = p.silence_start + self.cfg.deferral_cap_ms
            when = min(deadline, eos_time)
            self._emit(
                out,
                when,
                Trigger.DEFERRAL_TIMEOUT,
                p.silence_start,
                max(0, when - p.fire_time),
            )
        elif isinstance(p, _Deferral):
            when = min(p.deadline, eos_time)
            self._emit(
                out,
                when,
                Trigger.DEFERRAL_TIMEOUT,
                p.silence_start,
                max(0, when - p.trigger_time),
            )


def run_call(
    cfg: EndpointerConfig, timeline: Sequence[TimelineEvent]
) -> list[EndpointEvent]:
    """Fold step() over a merged timeline; returns all endpoints in order."""
    machine = new_endpointer(cfg)
    endpoints: list[EndpointEvent] = []
    for event in timeline:
        ep = machine.step(event)
        if ep is not None:
            endpoints.append(ep)
    return endpoints


def commit_transcript(
    tokens: Sequence[TokenEvent],
    endpoints: Sequence[EndpointEvent],
    stream_end_ms: int,
) -> list[TurnTranscript]:
    """Partition committed tokens into per-turn transcripts.

    A token belongs to turn k when it was emitted at or before endpoint k
    and after endpoint k-1.  Words are rebuilt per turn by word index:
    the word's text is the concatenation of its SUBWORD texts seen in the
    turn, and it is closed iff its EOW landed in the same turn.  Subwords
    split across an endpoint therefore surface as a fragment in each turn
    (the earlier fragment unclosed); an EOW whose subwords all live in an
    earlier turn contributes nothing to its own turn.  Tokens without a
    word index merge into anonymous single words between indexed tokens.

    With no endpoints at all the whole call is one turn ending at
    ``stream_end_ms``.  Trailing tokens after the last endpoint form a
    final turn only when at least one non-blank token exists there.
    """
    boundaries = [ep.time_ms for ep in endpoints]
    for k in range(1, len(boundaries)):
        if boundaries[k] < boundaries[k - 1]:
            raise ValueError(
                f"endpoints out of order: {boundaries[k]} after {boundaries[k - 1]}"
            )

    non_blank = [t for t in tokens if t.kind is not TokenKind.BLANK]
    inv = None
    for k in range(1, len(non_blank)):
        if non_blank[k].emit_time_ms < non_blank[k - 1].emit_time_ms:
            inv = k
            break
    if inv is not None:
        raise ValueError(f"token stream unsorted: first inversion at index {inv}")

    # slice tokens into turns
    turn_tokens: list[list[TokenEvent]] = [[] for _ in range(len(boundaries) + 1)]
    pos = 0
    for tok in non_blank:
        while pos < len(boundaries) and tok.emit_time_ms > boundaries[pos]:
            pos += 1
        turn_tokens[pos].append(tok)

    transcripts: list[TurnTranscript] = []
    anon_counter = 0

    def build_words(toks: list[TokenEvent]) -> tuple[tuple[str, bool], ...]:
        nonlocal anon_counter
        order: list[object] = []
        parts: dict[object, list[str]] = {}
        closed: dict[object, bool] = {}
        open_anon: Optional[object] = None
        for tok in toks:
            if tok.word_index is None:
                if tok.kind is TokenKind.SUBWORD:
                    if open_anon is None:
                        open_anon = ("anon", anon_counter)
                        anon_counter += 1
                        order.append(open_anon)
                        parts[open_anon] = []
                        closed[open_anon] = False
                    parts[open_anon].append(tok.text)
                elif open_anon is not None:
                    closed[open_anon] = True
                    open_anon = None
                continue
            open_anon = None
            key = tok.word_index
            if tok.kind is TokenKind.SUBWORD:
                if key not in parts:
                    order.append(key)
                    parts[key] = []
                    closed[key] = False
                parts[key].append(tok.text)
            elif key in parts:
                closed[key] = True
        return tuple(("".join(parts[k]), closed[k]) for k in order if parts[k])

    n_turns = len(boundaries)
    for k in range(n_turns):
        start = boundaries[k - 1] if k else 0
        transcripts.append(
            TurnTranscript(k, start, boundaries[k], build_words(turn_tokens[k]))
        )
    if not boundaries:
        transcripts.append(
            TurnTranscript(0, 0, stream_end_ms, build_words(turn_tokens[0]))
        )
    elif turn_tokens[n_turns]:
        transcripts.append(
            TurnTranscript(
                n_turns,
                boundaries[-1],
                stream_end_ms,
                build_words(turn_tokens[n_turns]),
            )
        )
    return transcripts


def hypothesis_words(transcripts: Sequence[TurnTranscript]) -> list[str]:
    """Call-level hypothesis: every committed word in turn order."""
    return [text for turn in transcripts for text, _ in turn.words]
