"""Sliding-window annotation pipeline.

A stream is cut into overlapping windows, every window is run through the
backbone, the per-frame probability vectors from overlapping windows are
averaged ("dynamic adjustment"), and the averaged stream is decoded once.
Decoding after averaging means a gesture seen by several windows can only
produce a single spike.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import softmax

from .backbone import ModelParams, forward
from .core import FrameStream, plan_windows, validate_stream
from .ctc import extract_spikes
from .exceptions import CoverageGap, DimensionMismatch, Unsorted

OVERLAP_MODES = ("mean", "nearest")
DECODE_MODES = ("ctc", "ce")

# CE baseline keeps a segment only if its mean class probability reaches this
CE_SEGMENT_THRESHOLD = 0.5


@dataclass(frozen=True)
class AnnotationRecord:
    class_id: int
    nucleus: int
    confidence: float
    support: tuple[int, int]  # inclusive

    def to_json(self) -> dict:
        return {"class": int(self.class_id), "nucleus": int(self.nucleus),
                "confidence": float(self.confidence),
                "support": [int(self.support[0]), int(self.support[1])]}

    @classmethod
    def from_json(cls, obj: dict) -> "AnnotationRecord":
        sup = obj.get("support", [obj["nucleus"], obj["nucleus"]])
        return cls(int(obj["class"]), int(obj["nucleus"]), float(obj.get("confidence", 1.0)),
                   (int(sup[0]), int(sup[1])))


def aggregate_overlaps(per_window: Sequence[tuple[int, np.ndarray]], T: int) -> np.ndarray:
    """Average the rows of every window covering each frame.

    Args:
        per_window: ``(offset, probability matrix)`` pairs.
        T: stream length.

    Returns:
        ``(T, K + 1)`` array of per-frame averaged probabilities, each row
        renormalised to sum to one.

    Raises:
        CoverageGap: some frame is covered by no window.
    """
    if not per_window:
        raise CoverageGap("no windows supplied")
    C = per_window[0][1].shape[1]
    total = np.zeros((T, C))
    count = np.zeros(T)
    for offset, M in per_window:
        M = np.asarray(M, dtype=float)
        stop = offset + M.shape[0]
        if offset < 0 or stop > T:
            raise CoverageGap(f"window [{offset}, {stop}) extends outside [0, {T})")
        total[offset:stop] += M
        count[offset:stop] += 1
    if (count == 0).any():
        gap = int(np.flatnonzero(count == 0)[0])
        raise CoverageGap(f"frame {gap} is not covered by any window")
    avg = total / count[:, None]
    return avg / avg.sum(axis=1, keepdims=True)


def stitch_nearest(per_window: Sequence[tuple[int, np.ndarray]], T: int) -> np.ndarray:
    """Take each frame's row from the covering window whose centre is closest.

    Ties go to the earlier window. This is the no-averaging counterpart of
    :func:`aggregate_overlaps`.
    """
    if not per_window:
        raise CoverageGap("no windows supplied")
    C = per_window[0][1].shape[1]
    out = np.zeros((T, C))
    best = np.full(T, np.inf)
    frames = np.arange(T)
    for offset, M in per_window:
        n = M.shape[0]
        centre = offset + (n - 1) / 2.0
        sl = slice(offset, offset + n)
        dist = np.abs(frames[sl] - centre)
        take = dist < best[sl]
        out[sl][take] = np.asarray(M)[take]
        best[sl] = np.where(take, dist, best[sl])
    if np.isinf(best).any():
        gap = int(np.flatnonzero(np.isinf(best))[0])
        raise CoverageGap(f"frame {gap} is not covered by any window")
    return out


def window_probabilities(params: ModelParams, stream: FrameStream, L: int, N: int):
    """Run the backbone over every planned window of ``stream``.

    All windows of one stream share a length, so they go through the network
    as a single batch.
    """
    plan = plan_windows(stream.n_frames, L, N)
    spans = list(plan.windows())
    batch = np.stack([stream.frames[a:b] for a, b in spans])
    logits, _ = forward(params, batch)
    probs = softmax(logits, axis=-1)
    return [(a, probs[i]) for i, (a, _) in enumerate(spans)]


def adjusted_stream(params: ModelParams, stream: FrameStream, L: int, N: int,
                    overlap: str = "mean") -> np.ndarray:
    if overlap not in OVERLAP_MODES:
        raise ValueError(f"overlap must be one of {OVERLAP_MODES}, got {overlap!r}")
    per_window = window_probabilities(params, stream, L, N)
    combine = aggregate_overlaps if overlap == "mean" else stitch_nearest
    return combine(per_window, stream.n_frames)


def decode_ctc(P: np.ndarray, min_peak: float = 0.0) -> list[AnnotationRecord]:
    return [AnnotationRecord(s.class_id, s.frame, s.peak_prob, s.support)
            for s in extract_spikes(P, min_peak)]


def decode_ce(P: np.ndarray, threshold: float = CE_SEGMENT_THRESHOLD) -> list[AnnotationRecord]:
    """Heuristic segment decoding used by the cross-entropy baseline.

    Consecutive frames with the same non-blank argmax form a segment. A
    segment is kept if its mean class probability reaches ``threshold``, and
    its nucleus is the frame of highest class probability.
    """
    blank = P.shape[1] - 1
    path = np.argmax(P, axis=1)
    records = []
    t, T = 0, len(path)
    while t < T:
        c = int(path[t])
        u = t
        while u + 1 < T and path[u + 1] == c:
            u += 1
        if c != blank:
            seg = P[t : u + 1, c]
            if seg.mean() >= threshold:
                peak = t + int(np.argmax(seg))
                records.append(AnnotationRecord(c, peak, float(P[peak, c]), (t, u)))
        t = u + 1
    return records


def annotate(params: ModelParams, stream: FrameStream, L: int = 200, N: int = 50,
             mode: str = "ctc", overlap: str = "mean", min_peak: float = 0.0,
             ce_threshold: float = CE_SEGMENT_THRESHOLD) -> list[AnnotationRecord]:
    """Annotate one stream, returning records in increasing nucleus order.

    Args:
        params: trained backbone.
        stream: stream to annotate; its spans (if any) are ignored.
        L, N: window length and step.
        mode: ``"ctc"`` for spike decoding, ``"ce"`` for the heuristic
            segment decoding of the cross-entropy baseline.
        overlap: ``"mean"`` averages overlapping windows, ``"nearest"`` keeps
            the row of the closest window only.
        min_peak: optional spike threshold; 0 keeps every spike.
        ce_threshold: segment threshold of the CE decoder.

    Raises:
        DimensionMismatch: the stream's feature dimension differs from the model.
    """
    if mode not in DECODE_MODES:
        raise ValueError(f"mode must be one of {DECODE_MODES}, got {mode!r}")
    validate_stream(stream)
    if stream.dim != params.input_dim:
        raise DimensionMismatch(
            f"stream {stream.stream_id!r} has D={stream.dim}, model expects D={params.input_dim}")
    P = adjusted_stream(params, stream, L, N, overlap)
    if mode == "ctc":
        return decode_ctc(P, min_peak)
    return decode_ce(P, ce_threshold)


def to_label_sequence(records: Sequence[AnnotationRecord]) -> list[int]:
    """Ordered class ids of ``records``.

    Raises:
        Unsorted: nuclei are not in non-decreasing order.
    """
    for a, b in zip(records, records[1:]):
        if b.nucleus < a.nucleus:
            raise Unsorted("annotation records must be sorted by nucleus")
    return [r.class_id for r in records]


def dumps_annotations(stream_id: str, records: Iterable[AnnotationRecord]) -> str:
    return json.dumps({"stream_id": stream_id, "annotations": [r.to_json() for r in records]},
                      separators=(",", ":"))


def write_annotations(results: Iterable[tuple[str, Sequence[AnnotationRecord]]], path) -> None:
    with open(path, "w") as fh:
        for stream_id, records in results:
            fh.write(dumps_annotations(stream_id, records))
            fh.write("\n")


def read_annotations(path: str | Path) -> dict[str, list[AnnotationRecord]]:
    out: dict[str, list[AnnotationRecord]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            out[str(obj["stream_id"])] = [AnnotationRecord.from_json(a) for a in obj["annotations"]]
    return out
