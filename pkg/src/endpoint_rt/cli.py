"""Command-line pipeline: simulate -> train-vad -> endpoint -> evaluate -> tradeoff.

Exit codes: 0 success, 2 usage or configuration error (bad flag values,
malformed config file, invalid parameter combinations), 1 runtime failure
(missing/corrupt inputs, data that cannot be processed).  The
``ENDPOINT_RT_LOG`` environment variable sets the log level (DEBUG, INFO,
WARNING, ERROR; default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import zlib
from dataclasses import fields as dataclass_fields
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import callfile, simulator, vadnet
from .endpointer import (
    EndpointerConfig,
    Mode,
    commit_transcript,
    hypothesis_words,
    run_call,
)
from .evaluator import EvalConfig, EvalReport, pool_scores, score_call, tradeoff
from .simulator import SimConfig, corrupt_vad, gen_call, oracle_vad
from .streams import CallRecord, merge_streams, validate_call

log = logging.getLogger(__name__)


class UsageError(Exception):
    """A problem the user can fix by changing flags or config."""


# -- config file --------------------------------------------------------------

_TUPLE_FIELDS = {
    "turn_dur_ms": 2,
    "gap_dur_ms": 2,
    "word_dur_ms": 2,
    "pause_dur_ms": 2,
    "subwords_per_word": 2,
    "emission_delay": 3,
}
_FLOAT_FIELDS = {"feature_separability", "teacher_flip_prob"}
_INT_FIELDS = {"seed", "n_turns", "feature_dim", "frame_ms"}


def load_sim_config(path: Path) -> SimConfig:
    """Parse a key=value config file into a SimConfig."""
    known = {f.name for f in dataclass_fields(SimConfig)}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            if key in _TUPLE_FIELDS:
                parts = [p.strip() for p in value.split(",")]
                if len(parts) != _TUPLE_FIELDS[key]:
                    raise ValueError(
                        f"expected {_TUPLE_FIELDS[key]} comma-separated values"
                    )
                cast = float if key == "emission_delay" else int
                values[key] = tuple(cast(p) for p in parts)
            elif key in _FLOAT_FIELDS:
                values[key] = float(value)
            elif key in _INT_FIELDS:
                values[key] = int(value)
            else:  # pragma: no cover - every known key is classified above
                raise ValueError("unhandled key")
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {key}: {exc}") from exc
    return SimConfig(**values)  # type: ignore[arg-type]


# -- VAD channel --------------------------------------------------------------


def _vad_decisions(call: CallRecord, spec: str, seed: int):
    """Produce per-frame decisions for --vad {model:<p>|oracle|corrupted:<eer>}."""
    if spec == "oracle":
        return oracle_vad(call)
    if spec.startswith("corrupted:"):
        try:
            eer = float(spec.partition(":")[2])
        except ValueError as exc:
            raise UsageError(f"--vad: bad corruption rate in {spec!r}") from exc
        if not 0.0 <= eer < 0.5:
            raise UsageError(f"--vad: corruption rate must lie in [0, 0.5), got {eer}")
        call_seed = (seed + zlib.crc32(call.call_id.encode())) % 2**32
        return corrupt_vad(oracle_vad(call), eer, call_seed)
    if spec.startswith("model:"):
        model_path = Path(spec.partition(":")[2])
        if not model_path.is_file():
            raise FileNotFoundError(f"--vad model not found: {model_path}")
        model, threshold = vadnet.load_model(model_path)
        return vadnet.classify_frames(model, call.frames, threshold)
    raise UsageError(
        f"--vad: expected model:<path>, oracle, or corrupted:<eer>, got {spec!r}"
    )


def _load_calls(calls_dir: Path) -> list[CallRecord]:
    if not calls_dir.is_dir():
        raise FileNotFoundError(f"calls directory not found: {calls_dir}")
    paths = sorted(calls_dir.glob("*.call"))
    if not paths:
        raise FileNotFoundError(f"no .call files in {calls_dir}")
    calls = []
    for p in paths:
        call = callfile.load_call(p)
        violations = validate_call(call)
        if violations:
            v = violations[0]
            raise ValueError(f"{p}: invalid call: {v.field}[{v.index}]: {v.message}")
        calls.append(call)
    return calls


def _endpoint_call(call: CallRecord, cfg: EndpointerConfig, vad_spec: str, seed: int):
    decisions = [] if cfg.mode is Mode.BLANK else _vad_decisions(call, vad_spec, seed)
    timeline = merge_streams(decisions, call.tokens)
    endpoints = run_call(cfg, timeline)
    transcripts = commit_transcript(call.tokens, endpoints, call.end_ms)
    return endpoints, transcripts


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_sim_config(args.config) if args.config else SimConfig()
    overrides: dict[str, object] = {"seed": args.seed}
    if args.frame_ms is not None:
        overrides["frame_ms"] = args.frame_ms
    cfg = replace(cfg, **overrides)  # type: ignore[arg-type]
    try:
        simulator._check_config(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(args.n_calls):
        call = gen_call(replace(cfg, seed=cfg.seed + k))
        callfile.save_call(call, out_dir / f"{call.call_id}.call")
        log.info("wrote %s (%d frames)", call.call_id, len(call.frames))
    print(f"wrote {args.n_calls} call files to {out_dir}")
    return 0


def cmd_train_vad(args: argparse.Namespace) -> int:
    try:
        hidden = tuple(int(h) for h in args.hidden.split(","))
        if len(hidden) != 2:
            raise ValueError("expected two comma-separated sizes")
    except ValueError as exc:
        raise UsageError(f"--hidden: {exc}") from exc
    if not 0.0 <= args.holdout < 1.0:
        raise UsageError(f"--holdout: must lie in [0, 1), got {args.holdout}")
    train_cfg = vadnet.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )

    calls = _load_calls(Path(args.calls))
    if args.features != "file":
        if not args.features.startswith("oracle:"):
            raise UsageError(
                f"--features: expected 'file' or 'oracle:<separability>', "
                f"got {args.features!r}"
            )
        try:
            sep = float(args.features.partition(":")[2])
        except ValueError as exc:
            raise UsageError(f"--features: bad separability in {args.features!r}") from exc
        if sep < 0:
            raise UsageError(f"--features: separability must be non-negative, got {sep}")
        calls = [
            simulator.resample_features(
                call, sep, (args.seed + zlib.crc32(call.call_id.encode())) % 2**32
            )
            for call in calls
        ]

    n_hold = int(round(args.holdout * len(calls)))
    n_hold = min(n_hold, len(calls) - 1)
    train_calls = calls[: len(calls) - n_hold]
    hold_calls = calls[len(calls) - n_hold :] if n_hold else train_calls
    if n_hold == 0:
        log.warning("holdout fraction rounds to 0 calls; evaluating on training data")

    train_frames = [fr for c in train_calls for fr in c.frames]
    dim = train_frames[0].features.shape[0]
    model = vadnet.init_model([dim, hidden[0], hidden[1], 1], seed=args.seed)
    losses = vadnet.train(model, train_frames, train_cfg, use_teacher=args.teacher)

    hold_frames = [fr for c in hold_calls for fr in c.frames]
    missing = [k for k, fr in enumerate(hold_frames) if fr.label is None]
    if missing:
        raise ValueError(f"held-out frame {missing[0]} has no ground-truth label")
    decisions = vadnet.classify_frames(model, hold_frames, 0.5)
    posteriors = [d.posterior for d in decisions]
    labels = [fr.label for fr in hold_frames]
    curve = vadnet.det_curve(posteriors, labels)
    point = vadnet.eer(curve)
    vadnet.save_model(model, Path(args.out), threshold=point.threshold)
    print(f"trained on {len(train_frames)} frames ({len(train_calls)} calls)")
    print(f"final_epoch_loss={losses[-1]:.6f}")
    print(
        f"held_out_calls={len(hold_calls) if n_hold else 0} "
        f"eer={point.eer:.4f} threshold={point.threshold:.6f}"
    )
    print(f"wrote model checkpoint to {args.out}")
    return 0


def _endpointer_config(args: argparse.Namespace) -> EndpointerConfig:
    try:
        mode = Mode(args.mode)
    except ValueError as exc:
        raise UsageError(f"--mode: unknown endpointing mode {args.mode!r}") from exc
    cfg = EndpointerConfig(
        mode=mode,
        ts_threshold_ms=args.delta_ms,
        blank_run_frames=args.blank_frames,
        deferral_cap_ms=args.deferral_cap_ms,
        frame_ms=args.frame_ms if args.frame_ms is not None else 40,
    )
    from .endpointer import new_endpointer

    try:
        new_endpointer(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def cmd_endpoint(args: argparse.Namespace) -> int:
    calls = _load_calls(Path(args.calls))
    frame_ms = args.frame_ms if args.frame_ms is not None else calls[0].frame_ms
    args.frame_ms = frame_ms
    cfg = _endpointer_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for call in calls:
        if call.frame_ms != cfg.frame_ms:
            raise ValueError(
                f"{call.call_id}: call frame_ms={call.frame_ms} does not match "
                f"configured frame_ms={cfg.frame_ms}"
            )
        endpoints, transcripts = _endpoint_call(call, cfg, args.vad, args.seed)
        callfile.save_endpoints(
            call.call_id, cfg.mode, endpoints, out_dir / f"{call.call_id}.endpoints"
        )
        callfile.save_transcripts(
            call.call_id, transcripts, out_dir / f"{call.call_id}.transcript"
        )
        print(f"{call.call_id}: {len(endpoints)} endpoints")
    print(f"wrote endpoint + transcript files for {len(calls)} calls to {out_dir}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    calls = _load_calls(Path(args.calls))
    ep_dir = Path(args.endpoints)
    if not ep_dir.is_dir():
        raise FileNotFoundError(f"endpoints directory not found: {ep_dir}")
    try:
        eval_cfg = EvalConfig(args.delta_ms, args.tolerance_ms)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    scores = []
    mode: Optional[Mode] = None
    for call in calls:
        ep_path = ep_dir / f"{call.call_id}.endpoints"
        tr_path = ep_dir / f"{call.call_id}.transcript"
        if not ep_path.is_file() or not tr_path.is_file():
            raise FileNotFoundError(
                f"{call.call_id}: missing endpoint/transcript pair in {ep_dir}"
            )
        ep_call_id, ep_mode, endpoints = callfile.load_endpoints(ep_path)
        tr_call_id, transcripts = callfile.load_transcripts(tr_path)
        if ep_call_id != call.call_id or tr_call_id != call.call_id:
            raise ValueError(f"{ep_path}: call id mismatch with {call.call_id}")
        if mode is None:
            mode = ep_mode
        elif mode is not ep_mode:
            raise ValueError(
                f"{ep_path}: mode {ep_mode.value} differs from {mode.value}"
            )
        ref_ends = [seg.end_ms for seg in call.segments]
        ref_words = [w for seg in call.segments for w in seg.words]
        hyp_words = [
            text for t in transcripts for text, _ in t.words
        ]
        s = score_call(ref_ends, endpoints, ref_words, hyp_words, eval_cfg)
        scores.append(s)
        m_hits, m_miss, m_fa = s.hits, s.misses, s.false_alarms
        print(
            f"{call.call_id}: hits={m_hits} misses={m_miss} false_alarms={m_fa} "
            f"errors={s.substitutions + s.deletions + s.insertions}/{s.ref_words}"
        )
    report = pool_scores(scores)
    assert mode is not None
    print(
        f"pooled: mode={mode.value} delta_ms={args.delta_ms} "
        f"precision={report.precision:.4f} recall={report.recall:.4f} "
        f"f1={report.f1:.4f} wer={report.wer:.4f} "
        f"mean_latency_ms={report.mean_latency_ms:.1f} "
        f"deferral_timeouts={report.deferral_timeouts}"
    )
    if args.out:
        callfile.save_report(
            [callfile.ReportRow(mode, args.delta_ms, args.tolerance_ms, report)],
            Path(args.out),
        )
        print(f"wrote report to {args.out}")
    return 0


def cmd_tradeoff(args: argparse.Namespace) -> int:
    try:
        modes = [Mode(m) for m in args.modes.split(",")]
    except ValueError as exc:
        raise UsageError(f"--modes: {exc}") from exc
    try:
        deltas = [int(d) for d in args.deltas.split(",")]
    except ValueError as exc:
        raise UsageError("--deltas: expected comma-separated integers") from exc
    if len(set(deltas)) != len(deltas) or len(deltas) < 2:
        raise UsageError(
            f"--deltas: need at least 2 distinct values, got {args.deltas!r}"
        )
    calls = _load_calls(Path(args.calls))
    frame_ms = args.frame_ms if args.frame_ms is not None else calls[0].frame_ms
    try:
        eval_tol = args.tolerance_ms
        rows: list[callfile.ReportRow] = []
        for mode in modes:
            per_delta: list[tuple[int, EvalReport]] = []
            for delta in deltas:
                if delta % frame_ms != 0:
                    raise UsageError(
                        f"--deltas: {delta} is not a multiple of frame_ms={frame_ms}"
                    )
                cfg = EndpointerConfig(
                    mode=mode,
                    ts_threshold_ms=delta,
                    blank_run_frames=max(1, delta // frame_ms),
                    deferral_cap_ms=max(args.deferral_cap_ms, delta),
                    frame_ms=frame_ms,
                )
                eval_cfg = EvalConfig(delta, eval_tol)
                scores = []
                for call in calls:
                    endpoints, transcripts = _endpoint_call(call, cfg, args.vad, args.seed)
                    ref_ends = [seg.end_ms for seg in call.segments]
                    ref_words = [w for seg in call.segments for w in seg.words]
                    scores.append(
                        score_call(
                            ref_ends,
                            endpoints,
                            ref_words,
                            hypothesis_words(transcripts),
                            eval_cfg,
                        )
                    )
                per_delta.append((delta, pool_scores(scores)))
            curve = tradeoff(per_delta)
            log.info(
                "mode %s: wer by delta %s",
                mode.value,
                [(row.delta_ms, round(row.wer, 4)) for row in curve],
            )
            rows.extend(
                callfile.ReportRow(mode, d, eval_tol, rep)
                for d, rep in sorted(per_delta, key=lambda dr: dr[0])
            )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    callfile.save_report(rows, Path(args.out))
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endpoint-rt",
        description="Streaming endpoint detection pipeline over simulated calls.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate synthetic call files")
    p_sim.add_argument("--config", type=Path, default=None, help="key=value config file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--n-calls", type=int, default=1)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--frame-ms", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_train = sub.add_parser("train-vad", help="train the frame classifier")
    p_train.add_argument("--calls", required=True, help="directory of .call files")
    p_train.add_argument("--out", required=True, help="model checkpoint path")
    p_train.add_argument(
        "--features",
        default="file",
        help="'file' to use stored features, 'oracle:<sep>' to resample at a separability",
    )
    p_train.add_argument("--hidden", default="16,16", help="hidden layer sizes h1,h2")
    p_train.add_argument("--epochs", type=int, default=20)
    p_train.add_argument("--lr", type=float, default=0.3)
    p_train.add_argument("--batch-size", type=int, default=64)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--holdout", type=float, default=0.2, help="held-out call fraction")
    p_train.add_argument(
        "--teacher", action="store_true", help="train on teacher labels instead of truth"
    )
    p_train.set_defaults(func=cmd_train_vad)

    p_ep = sub.add_parser("endpoint", help="run endpoint detection over calls")
    p_ep.add_argument("--calls", required=True)
    p_ep.add_argument("--out", required=True, help="output directory")
    p_ep.add_argument(
        "--vad", default="oracle", help="model:<path> | oracle | corrupted:<eer>"
    )
    p_ep.add_argument(
        "--mode", default=Mode.TS.value, choices=[m.value for m in Mode]
    )
    p_ep.add_argument("--delta-ms", type=int, default=200)
    p_ep.add_argument("--blank-frames", type=int, default=6)
    p_ep.add_argument("--deferral-cap-ms", type=int, default=1000)
    p_ep.add_argument("--frame-ms", type=int, default=None)
    p_ep.add_argument("--seed", type=int, default=0, help="seed for corrupted VAD")
    p_ep.set_defaults(func=cmd_endpoint)

    p_eval = sub.add_parser("evaluate", help="score endpoint files against references")
    p_eval.add_argument("--calls", required=True)
    p_eval.add_argument("--endpoints", required=True, help="directory from 'endpoint'")
    p_eval.add_argument("--delta-ms", type=int, default=200)
    p_eval.add_argument("--tolerance-ms", type=int, default=200)
    p_eval.add_argument("--out", default=None, help="optional report CSV path")
    p_eval.set_defaults(func=cmd_evaluate)

    p_trade = sub.add_parser("tradeoff", help="sweep modes x deltas into one CSV")
    p_trade.add_argument("--calls", required=True)
    p_trade.add_argument("--out", required=True, help="report CSV path")
    p_trade.add_argument(
        "--modes", default="BLANK,TS,EOW,TS_AND_EOW", help="comma-separated mode list"
    )
    p_trade.add_argument(
        "--deltas", default="200,400,600,800", help="comma-separated delta values"
    )
    p_trade.add_argument("--vad", default="oracle")
    p_trade.add_argument("--tolerance-ms", type=int, default=200)
    p_trade.add_argument("--deferral-cap-ms", type=int, default=1000)
    p_trade.add_argument("--frame-ms", type=int, default=None)
    p_trade.add_argument("--seed", type=int, default=0)
    p_trade.set_defaults(func=cmd_tradeoff)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("ENDPOINT_RT_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
