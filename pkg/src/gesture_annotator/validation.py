"""Input coercion helpers for the estimator API."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import FrameStream, GestureSpan, validate_stream
from .exceptions import DimensionMismatch, NoLabeledData


def _as_span(obj) -> GestureSpan:
    if isinstance(obj, GestureSpan):
        return obj
    if isinstance(obj, dict):
        return GestureSpan.from_json(obj)
    c, a, b = obj
    return GestureSpan(int(c), int(a), int(b))


def check_streams(X, y=None, *, n_classes: int | None = None,
                  require_spans: bool = False) -> list[FrameStream]:
    """Coerce ``X`` (and optional ``y``) into a list of validated FrameStreams.

    ``X`` may be a single FrameStream, a single ``(T, D)`` array, or a
    sequence of either. When ``y`` is given it supplies one span list per
    stream, each span as a GestureSpan, a ``(class, start, end)`` triple or a
    ``{"class", "start", "end"}`` dict; it overrides spans already on X.
    """
    if isinstance(X, FrameStream) or (isinstance(X, np.ndarray) and X.ndim == 2):
        X = [X]
    streams = []
    for i, item in enumerate(X):
        if isinstance(item, FrameStream):
            streams.append(item)
        else:
            streams.append(FrameStream(frames=np.asarray(item, dtype=float), stream_id=f"stream-{i:05d}"))
    if y is not None:
        if len(y) != len(streams):
            raise ValueError(f"got {len(streams)} streams but {len(y)} span lists")
        streams = [FrameStream(s.frames, tuple(_as_span(sp) for sp in spans), s.stream_id)
                   for s, spans in zip(streams, y)]
    for s in streams:
        validate_stream(s, n_classes)
    if require_spans and not any(s.spans is not None for s in streams):
        raise NoLabeledData("fit requires ground-truth spans (pass y or labeled streams)")
    return streams


def check_dim(streams: Sequence[FrameStream], expected: int | None = None) -> int:
    dims = {s.dim for s in streams}
    if expected is not None:
        dims.add(expected)
    if len(dims) != 1:
        raise DimensionMismatch(f"inconsistent feature dimensions {sorted(dims)}")
    return dims.pop()
