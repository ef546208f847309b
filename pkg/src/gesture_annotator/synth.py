"""Seeded synthetic gesture streams with exact ground-truth spans.

Every class owns a fixed trajectory template: one sinusoid per feature
dimension with a class-specific frequency and phase, shaped by a half-sine
envelope so a gesture leaves and returns to the rest pose. A gesture
instance is the template time-warped to its sampled length, plus noise.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import FrameStream, GestureSpan

AMPLITUDE = 1.0
REST_POSE = 0.0


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 5
    dim: int = 4
    gestures_per_stream: tuple[int, int] = (3, 5)
    gesture_len: tuple[int, int] = (20, 50)
    gap_len: tuple[int, int] = (10, 60)
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if self.dim < 1:
            raise ValueError(f"feature dimension must be >= 1, got {self.dim}")
        for name in ("gestures_per_stream", "gesture_len", "gap_len"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} range ({lo}, {hi}) is empty or negative")
            object.__setattr__(self, name, (int(lo), int(hi)))
        if self.gesture_len[0] < 1:
            raise ValueError("gestures must last at least one frame")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def template_params(n_classes: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-(class, dim) cycle counts and phases; deterministic, seed-free."""
    k = np.arange(n_classes)[:, None]
    d = np.arange(dim)[None, :]
    cycles = 1.0 + 0.5 * ((k + 2 * d) % (n_classes + 1))
    phase = np.pi * ((k * (d + 1)) % 4) / 2.0
    return cycles, phase


def class_template(class_id: int, length: int, n_classes: int, dim: int) -> np.ndarray:
    """Noise-free trajectory of ``class_id`` time-warped to ``length`` frames."""
    cycles, phase = template_params(n_classes, dim)
    tau = (np.arange(length) + 0.5) / length
    envelope = np.sin(np.pi * tau)[:, None]
    wave = np.sin(2 * np.pi * cycles[class_id][None, :] * tau[:, None] + phase[class_id][None, :])
    return REST_POSE + AMPLITUDE * envelope * wave


def _rng_for(cfg: SynthConfig, stream_index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream_index])


def gen_stream(cfg: SynthConfig, stream_index: int) -> FrameStream:
    """Generate stream ``stream_index``; depends only on ``(cfg, stream_index)``.

    Layout is ``gap, gesture, gap, gesture, ..., gesture, gap`` with every gap
    drawn from ``cfg.gap_len``.
    """
    rng = _rng_for(cfg, stream_index)
    n_gest = int(rng.integers(cfg.gestures_per_stream[0], cfg.gestures_per_stream[1] + 1))
    classes = rng.integers(0, cfg.n_classes, size=n_gest)
    lengths = rng.integers(cfg.gesture_len[0], cfg.gesture_len[1] + 1, size=n_gest)
    gaps = rng.integers(cfg.gap_len[0], cfg.gap_len[1] + 1, size=n_gest + 1)

    pieces, spans = [], []
    t = 0
    for i in range(n_gest):
        pieces.append(np.full((gaps[i], cfg.dim), REST_POSE))
        t += int(gaps[i])
        pieces.append(class_template(int(classes[i]), int(lengths[i]), cfg.n_classes, cfg.dim))
        spans.append(GestureSpan(int(classes[i]), t, t + int(lengths[i]) - 1))
        t += int(lengths[i])
    pieces.append(np.full((gaps[-1], cfg.dim), REST_POSE))
    frames = np.concatenate(pieces, axis=0)
    if frames.shape[0] == 0:
        frames = np.full((1, cfg.dim), REST_POSE)
    frames = frames + cfg.noise_sigma * rng.standard_normal(frames.shape)
    return FrameStream(frames=frames, spans=tuple(spans), stream_id=f"synth-{cfg.seed}-{stream_index:05d}")


def gen_dataset(cfg: SynthConfig, n_streams: int, start: int = 0) -> list[FrameStream]:
    """Streams with indices ``start .. start + n_streams - 1``."""
    if n_streams < 1:
        raise ValueError(f"n_streams must be >= 1, got {n_streams}")
    return [gen_stream(cfg, i) for i in range(start, start + n_streams)]


def nearest_template_class(segment: np.ndarray, n_classes: int) -> int:
    """Classify a gesture segment by Euclidean distance to each class template."""
    segment = np.asarray(segment, dtype=float)
    L, D = segment.shape
    dists = [np.sum((segment - class_template(k, L, n_classes, D)) ** 2) for k in range(n_classes)]
    return int(np.argmin(dists))
