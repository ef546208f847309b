"""Domain types, stream validation and sliding-window planning.

The blank / background class is always the last column of a probability
matrix: with ``K`` gesture classes, columns ``0..K-1`` are gestures and
column ``K`` is blank.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import (
    EmptyStream,
    InvalidStep,
    OverlappingSpans,
    RaggedFrames,
    SpanOutOfRange,
)


@dataclass(frozen=True)
class GestureSpan:
    """Ground-truth gesture occurrence; ``end`` is inclusive."""

    class_id: int
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def to_json(self) -> dict:
        return {"class": int(self.class_id), "start": int(self.start), "end": int(self.end)}

    @classmethod
    def from_json(cls, obj: dict) -> "GestureSpan":
        return cls(int(obj["class"]), int(obj["start"]), int(obj["end"]))


@dataclass(frozen=True)
class FrameStream:
    """A continuous sequence of D-dimensional feature frames.

    ``frames`` is stored as a read-only ``(T, D)`` float array. ``spans`` is
    ``None`` for unlabeled data.
    """

    frames: np.ndarray
    spans: tuple[GestureSpan, ...] | None = None
    stream_id: str = ""

    def __post_init__(self):
        # Ragged input is kept as an object array so validate_stream can report it.
        frames = self.frames
        if not isinstance(frames, np.ndarray):
            rows = [list(r) for r in frames]
            if len({len(r) for r in rows}) > 1:
                frames = np.array([np.asarray(r, dtype=float) for r in rows], dtype=object)
            else:
                frames = np.asarray(rows, dtype=float)
        if frames.dtype != object:
            frames = np.array(frames, dtype=float)
            frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        if self.spans is not None:
            object.__setattr__(self, "spans", tuple(self.spans))

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def dim(self) -> int:
        if self.frames.ndim != 2:
            raise RaggedFrames(f"stream {self.stream_id!r} has ragged frames")
        return self.frames.shape[1]

    @property
    def labels(self) -> list[int]:
        """Ordered gesture-level labels of the ground truth."""
        return [s.class_id for s in self.spans or ()]

    def to_json(self) -> dict:
        obj = {"stream_id": self.stream_id, "frames": self.frames.tolist()}
        if self.spans is not None:
            obj["spans"] = [s.to_json() for s in self.spans]
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "FrameStream":
        spans = obj.get("spans")
        if spans is not None:
            spans = tuple(GestureSpan.from_json(s) for s in spans)
        frames = obj["frames"]
        if len(frames) == 0:
            frames = np.zeros((0, 0))
        return cls(frames=frames, spans=spans, stream_id=str(obj.get("stream_id", "")))


@dataclass(frozen=True)
class WindowPlan:
    window_len: int
    step: int
    offsets: tuple[int, ...]
    n_frames: int

    def windows(self) -> Iterator[tuple[int, int]]:
        """Yield ``(start, stop)`` half-open frame ranges."""
        width = min(self.window_len, self.n_frames)
        for off in self.offsets:
            yield off, off + width


def validate_stream(raw: FrameStream, n_classes: int | None = None) -> FrameStream:
    """Check every FrameStream invariant and return the stream unchanged.

    Args:
        raw: stream to check.
        n_classes: when given, span classes must lie in ``[0, n_classes)``.

    Raises:
        EmptyStream, RaggedFrames, SpanOutOfRange, OverlappingSpans
    """
    frames = raw.frames
    if len(frames) == 0:
        raise EmptyStream(f"stream {raw.stream_id!r} has no frames")
    if frames.dtype == object or frames.ndim != 2:
        raise RaggedFrames(f"stream {raw.stream_id!r} mixes frame dimensions")
    if frames.shape[1] < 1:
        raise RaggedFrames(f"stream {raw.stream_id!r} has zero-dimensional frames")
    T = frames.shape[0]
    if raw.spans:
        prev_end = -1
        for span in raw.spans:
            if not 0 <= span.start <= span.end < T:
                raise SpanOutOfRange(
                    f"stream {raw.stream_id!r}: span {span} outside [0, {T})")
            if span.class_id < 0 or (n_classes is not None and span.class_id >= n_classes):
                raise SpanOutOfRange(
                    f"stream {raw.stream_id!r}: class {span.class_id} not a gesture class")
            if span.start <= prev_end:
                raise OverlappingSpans(
                    f"stream {raw.stream_id!r}: span {span} overlaps or is unsorted")
            prev_end = span.end
    return raw


def plan_windows(T: int, L: int, N: int) -> WindowPlan:
    """Plan sliding windows of length ``L`` and stride ``N`` over ``T`` frames.

    Offsets advance by ``N``; the last window is anchored to end on the last
    frame instead of being padded. Streams shorter than ``L`` get a single
    truncated window.
    """
    if N < 1 or N > L:
        raise InvalidStep(f"step must satisfy 1 <= N <= L, got N={N}, L={L}")
    if T < 1:
        raise EmptyStream("cannot plan windows over an empty stream")
    if T <= L:
        return WindowPlan(L, N, (0,), T)
    last = T - L
    offsets = list(range(0, last, N))
    offsets.append(last)
    return WindowPlan(L, N, tuple(offsets), T)


def coverage_counts(plan: WindowPlan) -> np.ndarray:
    counts = np.zeros(plan.n_frames, dtype=int)
    for start, stop in plan.windows():
        counts[start:stop] += 1
    return counts


def expected_interior_coverage(L: int, N: int) -> int:
    return math.ceil(L / N)


def read_streams(path: str | Path) -> list[FrameStream]:
    """Read a JSON-lines stream file (one stream per line)."""
    streams = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            streams.append(FrameStream.from_json(obj))
    return streams


def dumps_stream(stream: FrameStream) -> str:
    return json.dumps(stream.to_json(), separators=(",", ":"))


def write_streams(streams: Iterable[FrameStream], path: str | Path) -> None:
    with open(path, "w") as fh:
        for s in streams:
            fh.write(dumps_stream(s))
            fh.write("\n")


def as_label_sequence(labels: Sequence[int], n_classes: int | None = None) -> list[int]:
    out = [int(x) for x in labels]
    if n_classes is not None:
        for x in out:
            if not 0 <= x < n_classes:
                raise ValueError(f"label {x} outside [0, {n_classes})")
    return out
