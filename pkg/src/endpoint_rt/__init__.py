"""Streaming speech endpointing over merged VAD and token event streams.

The pipeline: simulate synthetic calls with ground truth, train a small
frame-level voice activity classifier, run one of four endpointing rules
(blank-run, trailing-silence, end-of-word, or their combination) over the
merged event timeline, and score the detected endpoints for
precision/recall/F1, word error rate, and latency.
"""

from ._kernels import BACKEND, edit_distance_counts, edit_matrix
from .endpointer import (
    EndpointEvent,
    Endpointer,
    EndpointerConfig,
    Mode,
    Trigger,
    TurnTranscript,
    commit_transcript,
    hypothesis_words,
    new_endpointer,
    run_call,
)
from .evaluator import (
    CallScore,
    EvalConfig,
    EvalReport,
    LatencyStats,
    Matching,
    PrfResult,
    TradeoffRow,
    WerResult,
    align_events,
    latency_stats,
    pool_scores,
    prf,
    score_call,
    tradeoff,
    wer,
)
from .simulator import SimConfig, corrupt_vad, gen_call, oracle_vad, resample_features
from .streams import (
    CallRecord,
    EndOfStream,
    FrameRecord,
    Label,
    ReferenceSegment,
    TimelineEvent,
    TokenEvent,
    TokenKind,
    VadDecision,
    Violation,
    merge_streams,
    validate_call,
)
from .vadnet import (
    DetCurve,
    MlpModel,
    OperatingPoint,
    TrainConfig,
    classify_frames,
    det_curve,
    eer,
    init_model,
    load_model,
    save_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CallRecord",
    "CallScore",
    "DetCurve",
    "EndOfStream",
    "EndpointEvent",
    "Endpointer",
    "EndpointerConfig",
    "EvalConfig",
    "EvalReport",
    "FrameRecord",
    "Label",
    "LatencyStats",
    "Matching",
    "MlpModel",
    "Mode",
    "OperatingPoint",
    "PrfResult",
    "ReferenceSegment",
    "SimConfig",
    "TimelineEvent",
    "TokenEvent",
    "TokenKind",
    "TradeoffRow",
    "TrainConfig",
    "Trigger",
    "TurnTranscript",
    "VadDecision",
    "Violation",
    "WerResult",
    "align_events",
    "classify_frames",
    "commit_transcript",
    "corrupt_vad",
    "det_curve",
    "edit_distance_counts",
    "edit_matrix",
    "eer",
    "gen_call",
    "hypothesis_words",
    "init_model",
    "latency_stats",
    "load_model",
    "merge_streams",
    "new_endpointer",
    "oracle_vad",
    "pool_scores",
    "prf",
    "resample_features",
    "run_call",
    "save_model",
    "score_call",
    "tradeoff",
    "train",
    "validate_call",
    "wer",
]
