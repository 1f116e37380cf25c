"""Frame-level voice activity classifier.

A small fixed-shape MLP ([d_in, h1, h2, 1], rectifier hidden units,
logistic output) trained with plain mini-batch gradient descent on
cross-entropy.  Nothing adaptive: no momentum, no schedules.  The point
of the model is not accuracy records but a controllable error rate, so
the module also carries the DET-curve / equal-error-rate analysis used to
pick an operating threshold, and a self-describing binary checkpoint
format so trained models can be fed back into the endpointing CLI.

Checkpoint layout (all little-endian):

    8 bytes   magic ``b"VADMLP1\\0"``
    uint32    number of layer dims (always 4)
    uint32[4] layer dims [d_in, h1, h2, 1]
    float64   operating threshold
    then per weight layer, in order: W (rows=fan_in, cols=fan_out,
    row-major float64) followed by its bias vector (float64).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .streams import FrameRecord, Label, VadDecision

CHECKPOINT_MAGIC = b"VADMLP1\x00"


@dataclass
class MlpModel:
    """Weights and biases for the fixed 3-layer shape."""

    layer_dims: tuple[int, int, int, int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.3
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    l2: float = 0.0


@dataclass(frozen=True)
class DetCurve:
    """Detection error trade-off: one point per threshold, sorted ascending.

    Thresholds include -inf and +inf sentinels, so fpr runs 1 -> 0 and fnr
    0 -> 1 across the curve.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    fnr: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.fnr.tolist()))


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    eer: float


def init_model(layer_dims: Sequence[int], seed: int) -> MlpModel:
    """Deterministically initialize a [d_in, h1, h2, 1] model.

    Weights are zero-mean normal scaled by 1/sqrt(fan_in); biases start at
    zero.  The same seed always yields bit-identical parameters.
    """
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) != 4 or dims[-1] != 1:
        raise ValueError(f"layer_dims must be [d_in, h1, h2, 1], got {list(dims)}")
    if any(d <= 0 for d in dims):
        raise ValueError(f"layer_dims must be positive, got {list(dims)}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases)  # type: ignore[arg-type]


def _forward_batch(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Posteriors for a batch, plus per-layer activations for backprop."""
    acts = [x]
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    z = (h @ model.weights[-1] + model.biases[-1]).ravel()
    acts.append(z)
    # logistic, computed stably on both tails
    p = np.empty_like(z)
    pos = z >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    p[~pos] = ez / (1.0 + ez)
    return p, acts


def forward(model: MlpModel, features: np.ndarray) -> float:
    """Posterior probability of speech for one frame, strictly inside (0, 1)."""
    p, _ = _forward_batch(model, np.asarray(features, dtype=float).reshape(1, -1))
    tiny = np.finfo(float).tiny
    return float(np.clip(p[0], tiny, 1.0 - np.finfo(float).epsneg))


def loss_and_grads(
    model: MlpModel, x: np.ndarray, y: np.ndarray, l2: float = 0.0
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean cross-entropy (+ l2/2 * ||W||^2) and its parameter gradients.

    The loss is computed from logits via log1p-style softplus, so the
    value and the gradients stay finite for any parameter scale; gradients
    here are what one training step descends.
    """
    n = x.shape[0]
    p, acts = _forward_batch(model, x)
    z = acts[-1]
    # softplus(z) - y*z == -[y log p + (1-y) log(1-p)]
    data_loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    loss = data_loss + 0.5 * l2 * sum(float(np.sum(w * w)) for w in model.weights)

    d_z = (p - y) / n
    grads_w: list[np.ndarray] = [np.empty(0)] * 3
    grads_b: list[np.ndarray] = [np.empty(0)] * 3
    delta = d_z[:, None]
    for layer in (2, 1, 0):
        grads_w[layer] = acts[layer].T @ delta + l2 * model.weights[layer]
        grads_b[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0.0)
    return loss, grads_w, grads_b


def train(
    model: MlpModel,
    frames: Sequence[FrameRecord],
    cfg: TrainConfig,
    use_teacher: bool = False,
) -> list[float]:
    """Train in place on labeled frames; returns per-epoch mean sample loss.

    Batches are reshuffled every epoch from the config seed, so a fixed
    (seed, input order) pair gives a bit-identical trajectory.  Frames
    missing the requested label column are rejected, as is single-class
    data (no decision boundary to learn).
    """
    feats = []
    labels = []
    for k, f in enumerate(frames):
        lab = f.teacher_label if use_teacher else f.label
        if lab is None:
            col = "teacher_label" if use_teacher else "label"
            raise ValueError(f"frame {k} has no {col}; cannot train on it")
        feats.append(np.asarray(f.features, dtype=float))
        labels.append(1.0 if lab is Label.SPEECH else 0.0)
    x = np.stack(feats) if feats else np.empty((0, model.layer_dims[0]))
    y = np.asarray(labels)
    return train_arrays(model, x, y, cfg)


def train_arrays(
    model: MlpModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig
) -> list[float]:
    """Array-level core of train(); y holds 1.0 for speech, 0.0 for nonspeech."""
    n = x.shape[0]
    if n == 0:
        raise ValueError("no training frames")
    if len(np.unique(y)) < 2:
        raise ValueError("training data contains a single class")
    if cfg.epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {cfg.epochs}")
    if cfg.batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {cfg.batch_size}")

    rng = np.random.default_rng(cfg.seed)
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, gw, gb = loss_and_grads(model, x[idx], y[idx], cfg.l2)
            total += loss * len(idx)
            for layer in range(3):
                model.weights[layer] -= cfg.learning_rate * gw[layer]
                model.biases[layer] -= cfg.learning_rate * gb[layer]
        history.append(total / n)
    return history


def det_curve(posteriors: Sequence[float], labels: Sequence[Label]) -> DetCurve:
    """DET curve over every distinct score plus -inf/+inf sentinels.

    At threshold t: fpr = fraction of nonspeech frames scoring >= t,
    fnr = fraction of speech frames scoring < t.  Needs both classes.
    """
    scores = np.asarray(posteriors, dtype=float)
    is_sp = np.asarray([l is Label.SPEECH for l in labels], dtype=bool)
    if scores.shape[0] != is_sp.shape[0]:
        raise ValueError("posteriors and labels differ in length")
    n_sp = int(is_sp.sum())
    n_non = int((~is_sp).sum())
    if n_sp == 0 or n_non == 0:
        raise ValueError("det_curve needs both speech and nonspeech frames")
    sp = np.sort(scores[is_sp])
    non = np.sort(scores[~is_sp])
    thr = np.concatenate(([-np.inf], np.unique(scores), [np.inf]))
    fpr = (n_non - np.searchsorted(non, thr, side="left")) / n_non
    fnr = np.searchsorted(sp, thr, side="left") / n_sp
    return DetCurve(thr, fpr, fnr)


def eer(curve: DetCurve) -> OperatingPoint:
    """Equal error rate of a DET curve.

    Walks the curve (fpr - fnr is non-increasing) to the first point where
    the difference reaches zero or flips sign; a sign flip is resolved by
    linear interpolation between the two points, in rate space and in
    threshold (an infinite sentinel threshold clamps to its finite
    neighbor).
    """
    diffs = curve.fpr - curve.fnr
    if diffs[0] == 0.0:
        return OperatingPoint(float(curve.thresholds[0]), float(curve.fpr[0]))
    for k in range(1, len(diffs)):
        if diffs[k] == 0.0:
            return OperatingPoint(float(curve.thresholds[k]), float(curve.fpr[k]))
        if diffs[k] < 0.0:
            alpha = diffs[k - 1] / (diffs[k - 1] - diffs[k])
            rate = 0.5 * (
                curve.fpr[k - 1]
                + alpha * (curve.fpr[k] - curve.fpr[k - 1])
                + curve.fnr[k - 1]
                + alpha * (curve.fnr[k] - curve.fnr[k - 1])
            )
            lo, hi = float(curve.thresholds[k - 1]), float(curve.thresholds[k])
            if not np.isfinite(lo):
                thr = hi
            elif not np.isfinite(hi):
                thr = lo
            else:
                thr = lo + float(alpha) * (hi - lo)
            return OperatingPoint(thr, float(rate))
    raise ValueError("DET curve has no equal-error crossing")


def classify_frames(
    model: MlpModel, frames: Sequence[FrameRecord], threshold: float
) -> list[VadDecision]:
    """Threshold model posteriors into per-frame decisions (speech iff p >= t)."""
    if not frames:
        return []
    x = np.stack([np.asarray(f.features, dtype=float) for f in frames])
    p, _ = _forward_batch(model, x)
    tiny = np.finfo(float).tiny
    p = np.clip(p, tiny, 1.0 - np.finfo(float).epsneg)
    return [
        VadDecision(f.index, f.time_ms, float(pi), bool(pi >= threshold))
        for f, pi in zip(frames, p)
    ]


def save_model(model: MlpModel, path: str, threshold: float = 0.5) -> None:
    """Write the checkpoint format documented in the module docstring."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(model.layer_dims)))
        fh.write(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
        fh.write(struct.pack("<d", float(threshold)))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path: str) -> tuple[MlpModel, float]:
    """Read a checkpoint back; returns (model, operating threshold)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic {magic!r})")
        (n_dims,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
        if n_dims != 4 or dims[-1] != 1:
            raise ValueError(f"{path}: unsupported layer dims {list(dims)}")
        (threshold,) = struct.unpack("<d", fh.read(8))
        weights = []
        biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8")
            weights.append(w.reshape(fan_in, fan_out).astype(float))
            biases.append(np.frombuffer(fh.read(8 * fan_out), dtype="<f8").astype(float))
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after parameters")
    return MlpModel(tuple(dims), weights, biases), threshold  # type: ignore[arg-type]
