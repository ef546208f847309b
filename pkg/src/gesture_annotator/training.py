"""Training loop for the backbone in CTC or cross-entropy mode.

CTC windows are weakly segmented: the target is only the ordered list of
gestures that lie mostly inside the window. CE windows need one label per
frame, with background frames labeled blank.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .backbone import Adam, ModelParams, backward, ce_loss_and_grad, forward, init_params
from .core import FrameStream, GestureSpan, plan_windows, validate_stream
from .ctc import ctc_loss_and_grad_batch, min_frames_needed
from .exceptions import DimensionMismatch, NoLabeledData

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gesture-annotator-checkpoint"
CHECKPOINT_VERSION = 1

LOSS_MODES = ("ctc", "ce")

# fraction of a gesture that must fall inside a window for it to be a CTC target
TARGET_COVERAGE = 0.5


@dataclass(frozen=True)
class TrainConfig:
    n_classes: int = 5
    hidden: int = 32
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 5
    max_epochs: int = 100
    batch_size: int = 8
    window_len: int = 200
    step: int = 50
    seed: int = 0
    loss_mode: str = "ctc"
    val_fraction: float = 0.1

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.hidden < 1:
            raise ValueError("batch_size, max_epochs and hidden must be >= 1")
        if not 1 <= self.step <= self.window_len:
            raise ValueError(f"need 1 <= step <= window_len, got {self.step}, {self.window_len}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class Checkpoint:
    params: ModelParams
    config: TrainConfig
    epoch: int
    validation_loss: float
    history: list[float] = field(default_factory=list)
    skipped_windows: int = 0

    def to_json(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "format_version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "validation_loss": self.validation_loss,
            "history": list(self.history),
            "skipped_windows": self.skipped_windows,
            "shapes": {k: list(v) for k, v in self.params.shapes().items()},
            "weights": self.params.flat().tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Checkpoint":
        if obj.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a gesture-annotator checkpoint")
        if obj.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {obj.get('format_version')}")
        params = ModelParams.from_flat(np.array(obj["weights"], dtype=float), obj["shapes"])
        return cls(
            params=params,
            config=TrainConfig.from_dict(obj["config"]),
            epoch=int(obj["epoch"]),
            validation_loss=float(obj["validation_loss"]),
            history=[float(x) for x in obj.get("history", [])],
            skipped_windows=int(obj.get("skipped_windows", 0)),
        )

    def dumps(self) -> str:
        # float repr round-trips exactly, so the JSON text is bit-faithful
        return json.dumps(self.to_json(), separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
        return cls.from_json(json.loads(text))


def window_ctc_target(spans: Sequence[GestureSpan], start: int, stop: int) -> list[int]:
    """Ordered classes of gestures with at least half their frames in ``[start, stop)``."""
    out = []
    for s in spans:
        inside = min(s.end + 1, stop) - max(s.start, start)
        if inside > 0 and inside >= TARGET_COVERAGE * s.length:
            out.append(s.class_id)
    return out


def framewise_targets(spans: Sequence[GestureSpan], n_frames: int, blank: int) -> np.ndarray:
    y = np.full(n_frames, blank, dtype=np.int64)
    for s in spans:
        y[s.start : s.end + 1] = s.class_id
    return y


@dataclass
class _Window:
    stream: int
    start: int
    stop: int
    target: object


def build_windows(streams: Sequence[FrameStream], L: int, N: int, mode: str, n_classes: int):
    """Cut every stream into training windows.

    Returns ``(windows, n_skipped)``; CTC windows whose target cannot fit the
    window are skipped.
    """
    windows, skipped = [], 0
    for i, s in enumerate(streams):
        plan = plan_windows(s.n_frames, L, N)
        framewise = framewise_targets(s.spans, s.n_frames, n_classes) if mode == "ce" else None
        for start, stop in plan.windows():
            if mode == "ctc":
                target = window_ctc_target(s.spans, start, stop)
                if min_frames_needed(target) > stop - start:
                    skipped += 1
                    continue
            else:
                target = framewise[start:stop]
            windows.append(_Window(i, start, stop, target))
    return windows, skipped


def _batches(windows: list[_Window], batch_size: int, rng: np.random.Generator | None):
    """Group windows into equal-length batches, optionally in shuffled order."""
    order = np.arange(len(windows)) if rng is None else rng.permutation(len(windows))
    by_len: dict[int, list[int]] = {}
    for i in order:
        w = windows[i]
        by_len.setdefault(w.stop - w.start, []).append(int(i))
    batches = []
    for length in sorted(by_len):
        idx = by_len[length]
        batches.extend(idx[j : j + batch_size] for j in range(0, len(idx), batch_size))
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def batch_loss_and_grad(params: ModelParams, streams, windows: list[_Window], idx: list[int],
                        mode: str, need_grad: bool = True):
    """Mean loss over a batch of equal-length windows, plus the parameter gradient."""
    x = np.stack([streams[windows[i].stream].frames[windows[i].start : windows[i].stop] for i in idx])
    logits, cache = forward(params, x)
    B = len(idx)
    if mode == "ctc":
        losses, d_logits = ctc_loss_and_grad_batch(logits, [windows[i].target for i in idx])
        loss = float(losses.mean())
    else:
        d_logits = np.empty_like(logits)
        total = 0.0
        for b, i in enumerate(idx):
            l, g = ce_loss_and_grad(logits[b], windows[i].target)
            total += l
            d_logits[b] = g
        loss = total / B
    if not need_grad:
        return loss, None
    grads = backward(params, cache, d_logits / B)
    return loss, grads


def evaluate_loss(params: ModelParams, streams, windows, batch_size: int, mode: str) -> float:
    if not windows:
        return float("nan")
    total = 0.0
    for idx in _batches(windows, batch_size, None):
        loss, _ = batch_loss_and_grad(params, streams, windows, idx, mode, need_grad=False)
        total += loss * len(idx)
    return total / len(windows)


def split_train_val(streams: Sequence[FrameStream], val_fraction: float):
    """Hold out the last ``val_fraction`` of streams ordered by stream_id."""
    ordered = sorted(streams, key=lambda s: s.stream_id)
    n_val = int(round(len(ordered) * val_fraction))
    if len(ordered) >= 2:
        n_val = max(n_val, 1)
    else:
        n_val = 0
    if n_val == 0:
        return list(ordered), list(ordered)
    return ordered[:-n_val], ordered[-n_val:]


def train(streams: Sequence[FrameStream], config: TrainConfig,
          callback=None) -> Checkpoint:
    """Train a backbone and return the checkpoint with the lowest validation loss.

    Training stops once ``config.patience`` consecutive epochs fail to improve
    the best validation loss, or after ``config.max_epochs``. Everything is
    seeded from ``config.seed``, so repeated calls are bit-identical.

    Raises:
        NoLabeledData: no stream carries ground-truth spans.
        DimensionMismatch: streams disagree on the feature dimension.
    """
    labeled = [validate_stream(s, config.n_classes) for s in streams if s.spans is not None]
    if not labeled:
        raise NoLabeledData("training requires streams with ground-truth spans")
    dims = {s.dim for s in labeled}
    if len(dims) != 1:
        raise DimensionMismatch(f"streams have mixed feature dimensions {sorted(dims)}")
    D = dims.pop()

    train_streams, val_streams = split_train_val(labeled, config.val_fraction)
    L, N, K = config.window_len, config.step, config.n_classes
    tr_windows, skipped_tr = build_windows(train_streams, L, N, config.loss_mode, K)
    va_windows, skipped_va = build_windows(val_streams, L, N, config.loss_mode, K)
    skipped = skipped_tr + skipped_va
    if skipped:
        logger.warning("skipped %d windows whose CTC target is longer than the window", skipped)
    if not tr_windows:
        raise NoLabeledData("no usable training windows")

    rng = np.random.default_rng(config.seed)
    params = init_params(D, K, config.hidden, seed=int(rng.integers(2**31)))
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)

    history = [evaluate_loss(params, val_streams, va_windows, config.batch_size, config.loss_mode)]
    logger.info("epoch 0: validation loss %.4f", history[0])
    best = Checkpoint(params.copy(), config, 0, float("inf"), skipped_windows=skipped)
    best_loss = float("inf")
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        train_total = 0.0
        for idx in _batches(tr_windows, config.batch_size, rng):
            loss, grads = batch_loss_and_grad(params, train_streams, tr_windows, idx, config.loss_mode)
            train_total += loss * len(idx)
            opt.step(params, grads)
        val_loss = evaluate_loss(params, val_streams, va_windows, config.batch_size, config.loss_mode)
        history.append(val_loss)
        logger.info("epoch %d: train loss %.4f, validation loss %.4f",
                    epoch, train_total / len(tr_windows), val_loss)
        if callback is not None:
            callback(epoch, val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best = Checkpoint(params.copy(), config, epoch, val_loss, skipped_windows=skipped)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("early stop after epoch %d (best epoch %d)", epoch, best.epoch)
                break
    best.history = history
    return best
