"""Line-oriented text formats for calls, endpoints, transcripts, and reports.

Every format starts with a ``format=1`` version line (the CSV report uses
a ``# format=1`` comment so spreadsheet tools still open it).  Formats
round-trip exactly: floats are written with ``repr``, which the reader
recovers bit-identically, and empty strings or absent values are written
as the placeholder ``-``.

Call file layout, one call per file::

    format=1
    call <call_id> <frame_ms> <feature_dim>
    frame <index> <label|-> <teacher_label|-> <f0> <f1> ...
    token <emit_time_ms> <kind> <text|-> <word_index|->
    segment <start_ms> <end_ms> <word> ...

Endpoint files carry one ``endpoint`` line per event; transcript files
carry one ``turn`` line per turn with unclosed (fragment) words marked by
a trailing ``*``.  The report CSV has the fixed header ``mode,delta_ms,
tolerance_ms,precision,recall,f1,wer,S,D,I,mean_latency_ms,
median_latency_ms,deferral_timeouts``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .endpointer import EndpointEvent, Mode, Trigger, TurnTranscript
from .evaluator import EvalReport
from .streams import (
    CallRecord,
    FrameRecord,
    Label,
    ReferenceSegment,
    TokenEvent,
    TokenKind,
)

__all__ = [
    "FORMAT_LINE",
    "REPORT_COLUMNS",
    "ReportRow",
    "save_call",
    "load_call",
    "save_endpoints",
    "load_endpoints",
    "save_transcripts",
    "load_transcripts",
    "save_report",
    "load_report",
]

FORMAT_LINE = "format=1"
_PLACEHOLDER = "-"

REPORT_COLUMNS = (
    "mode",
    "delta_ms",
    "tolerance_ms",
    "precision",
    "recall",
    "f1",
    "wer",
    "S",
    "D",
    "I",
    "mean_latency_ms",
    "median_latency_ms",
    "deferral_timeouts",
)


class FormatError(ValueError):
    """A file does not parse as the format it claims to be."""


def _fail(path: Union[str, Path], lineno: int, message: str) -> None:
    raise FormatError(f"{path}:{lineno}: {message}")


def _opt(value: str) -> Optional[str]:
    return None if value == _PLACEHOLDER else value


def _encode(value: Optional[str]) -> str:
    if value is None or value == "":
        return _PLACEHOLDER
    if any(ch.isspace() for ch in value) or value == _PLACEHOLDER:
        raise ValueError(f"cannot serialize text field {value!r}")
    return value


def _read_lines(path: Union[str, Path]) -> list[str]:
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines or lines[0] != FORMAT_LINE:
        _fail(path, 1, f"missing {FORMAT_LINE!r} header")
    return lines


# -- call files ---------------------------------------------------------------


def save_call(call: CallRecord, path: Union[str, Path]) -> None:
    dim = call.frames[0].features.shape[0] if call.frames else 0
    out = [FORMAT_LINE, f"call {_encode(call.call_id)} {call.frame_ms} {dim}"]
    for fr in call.frames:
        label = fr.label.value if fr.label is not None else _PLACEHOLDER
        teacher = fr.teacher_label.value if fr.teacher_label is not None else _PLACEHOLDER
        feats = " ".join(repr(float(v)) for v in fr.features)
        out.append(f"frame {fr.index} {label} {teacher} {feats}".rstrip())
    for tok in call.tokens:
        idx = _PLACEHOLDER if tok.word_index is None else str(tok.word_index)
        out.append(
            f"token {tok.emit_time_ms} {tok.kind.value} {_encode(tok.text)} {idx}"
        )
    for seg in call.segments:
        words = " ".join(_encode(w) for w in seg.words)
        out.append(f"segment {seg.start_ms} {seg.end_ms} {words}".rstrip())
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")


def load_call(path: Union[str, Path]) -> CallRecord:
    lines = _read_lines(path)
    call_id = ""
    frame_ms = 0
    dim = 0
    frames: list[FrameRecord] = []
    tokens: list[TokenEvent] = []
    segments: list[ReferenceSegment] = []
    saw_header = False
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "call":
                if saw_header:
                    _fail(path, lineno, "duplicate call header")
                call_id, frame_ms, dim = parts[1], int(parts[2]), int(parts[3])
                saw_header = True
            elif tag == "frame":
                if not saw_header:
                    _fail(path, lineno, "frame record before call header")
                if len(parts) != 4 + dim:
                    _fail(
                        path,
                        lineno,
                        f"frame line has {len(parts) - 4} feature values, expected {dim}",
                    )
                label = _opt(parts[2])
                teacher = _opt(parts[3])
                frames.append(
                    FrameRecord(
                        index=int(parts[1]),
                        time_ms=int(parts[1]) * frame_ms,
                        features=np.array([float(v) for v in parts[4:]]),
                        label=Label(label) if label else None,
                        teacher_label=Label(teacher) if teacher else None,
                    )
                )
            elif tag == "token":
                if len(parts) != 5:
                    _fail(path, lineno, f"token line has {len(parts)} fields, expected 5")
                idx = _opt(parts[4])
                tokens.append(
                    TokenEvent(
                        emit_time_ms=int(parts[1]),
                        kind=TokenKind(parts[2]),
                        text=_opt(parts[3]) or "",
                        word_index=int(idx) if idx is not None else None,
                    )
                )
            elif tag == "segment":
                if not saw_header:
                    _fail(path, lineno, "segment record before call header")
                segments.append(
                    ReferenceSegment(
                        call_id=call_id,
                        start_ms=int(parts[1]),
                        end_ms=int(parts[2]),
                        words=tuple(parts[3:]),
                    )
                )
            else:
                _fail(path, lineno, f"unknown record tag {tag!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, FormatError):
                raise
            _fail(path, lineno, f"bad {tag} record: {exc}")
    if not saw_header:
        _fail(path, len(lines), "no call header line")
    return CallRecord(
        call_id=call_id,
        frame_ms=frame_ms,
        frames=tuple(frames),
        tokens=tuple(tokens),
        segments=tuple(segments),
    )


# -- endpoint files -----------------------------------------------------------


def save_endpoints(
    call_id: str,
    mode: Mode,
    endpoints: Sequence[EndpointEvent],
    path: Union[str, Path],
) -> None:
    out = [FORMAT_LINE, f"call {_encode(call_id)}", f"mode {mode.value}"]
    for ep in endpoints:
        out.append(
            f"endpoint {ep.time_ms} {ep.trigger.value} "
            f"{ep.silence_start_ms} {ep.deferred_by_ms}"
        )
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")


def load_endpoints(
    path: Union[str, Path],
) -> tuple[str, Mode, list[EndpointEvent]]:
    lines = _read_lines(path)
    call_id = ""
    mode: Optional[Mode] = None
    endpoints: list[EndpointEvent] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            if parts[0] == "call":
                call_id = parts[1]
            elif parts[0] == "mode":
                mode = Mode(parts[1])
            elif parts[0] == "endpoint":
                endpoints.append(
                    EndpointEvent(
                        time_ms=int(parts[1]),
                        trigger=Trigger(parts[2]),
                        silence_start_ms=int(parts[3]),
                        deferred_by_ms=int(parts[4]),
                    )
                )
            else:
                _fail(path, lineno, f"unknown record tag {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, FormatError):
                raise
            _fail(path, lineno, f"bad {parts[0]} record: {exc}")
    if not call_id or mode is None:
        _fail(path, len(lines), "endpoint file missing call or mode line")
    return call_id, mode, endpoints


# -- transcript files ---------------------------------------------------------


def save_transcripts(
    call_id: str,
    transcripts: Sequence[TurnTranscript],
    path: Union[str, Path],
) -> None:
    out = [FORMAT_LINE, f"call {_encode(call_id)}"]
    for turn in transcripts:
        words = " ".join(
            _encode(text) + ("" if closed else "*") for text, closed in turn.words
        )
        out.append(
            f"turn {turn.turn_index} {turn.start_ms} {turn.end_ms} {words}".rstrip()
        )
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")


def load_transcripts(path: Union[str, Path]) -> tuple[str, list[TurnTranscript]]:
    lines = _read_lines(path)
    call_id = ""
    turns: list[TurnTranscript] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            if parts[0] == "call":
                call_id = parts[1]
            elif parts[0] == "turn":
                words = tuple(
                    (w[:-1], False) if w.endswith("*") else (w, True)
                    for w in parts[4:]
                )
                turns.append(
                    TurnTranscript(
                        turn_index=int(parts[1]),
                        start_ms=int(parts[2]),
                        end_ms=int(parts[3]),
                        words=words,
                    )
                )
            else:
                _fail(path, lineno, f"unknown record tag {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, FormatError):
                raise
            _fail(path, lineno, f"bad {parts[0]} record: {exc}")
    if not call_id:
        _fail(path, len(lines), "transcript file missing call line")
    return call_id, turns


# -- report CSV ---------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    """One scored configuration, ready for the report CSV."""

    mode: Mode
    delta_ms: int
    tolerance_ms: int
    report: EvalReport


def save_report(rows: Sequence[ReportRow], path: Union[str, Path]) -> None:
    buf = io.StringIO()
    buf.write(f"# {FORMAT_LINE}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        r = row.report
        writer.writerow(
            [
                row.mode.value,
                row.delta_ms,
                row.tolerance_ms,
                repr(r.precision),
                repr(r.recall),
                repr(r.f1),
                repr(r.wer),
                r.substitutions,
                r.deletions,
                r.insertions,
                repr(r.mean_latency_ms),
                repr(r.median_latency_ms),
                r.deferral_timeouts,
            ]
        )
    Path(path).write_text(buf.getvalue(), encoding="ascii")


def load_report(path: Union[str, Path]) -> list[ReportRow]:
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines or lines[0] != f"# {FORMAT_LINE}":
        _fail(path, 1, f"missing '# {FORMAT_LINE}' header")
    reader = csv.reader(lines[1:])
    try:
        header = next(reader)
    except StopIteration:
        _fail(path, 2, "missing column header")
    if tuple(header) != REPORT_COLUMNS:
        _fail(path, 2, f"unexpected columns {header!r}")
    rows: list[ReportRow] = []
    for lineno, rec in enumerate(reader, start=3):
        if not rec:
            continue
        if len(rec) != len(REPORT_COLUMNS):
            _fail(path, lineno, f"row has {len(rec)} fields, expected {len(REPORT_COLUMNS)}")
        try:
            rows.append(
                ReportRow(
                    mode=Mode(rec[0]),
                    delta_ms=int(rec[1]),
                    tolerance_ms=int(rec[2]),
                    report=EvalReport(
                        precision=float(rec[3]),
                        recall=float(rec[4]),
                        f1=float(rec[5]),
                        wer=float(rec[6]),
                        substitutions=int(rec[7]),
                        deletions=int(rec[8]),
                        insertions=int(rec[9]),
                        mean_latency_ms=float(rec[10]),
                        median_latency_ms=float(rec[11]),
                        deferral_timeouts=int(rec[12]),
                    ),
                )
            )
        except ValueError as exc:
            _fail(path, lineno, f"bad report row: {exc}")
    return rows
