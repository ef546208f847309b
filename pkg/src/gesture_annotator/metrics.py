"""Classification accuracy from edit distance, and nucleus localisation error."""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import GestureSpan
from .exceptions import EmptyTruth, NucleusOutsideSpan


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum number of insertions, deletions and substitutions turning ``a`` into ``b``."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def accuracy(y_pred: Sequence[int], y_true: Sequence[int]) -> float:
    """``1 - levenshtein(y_pred, y_true) / len(y_true)``.

    Not clamped: more edits than true labels gives a negative score.
    """
    if len(y_true) == 0:
        raise EmptyTruth("accuracy is undefined for an empty ground-truth sequence")
    return 1.0 - levenshtein(y_pred, y_true) / len(y_true)


def nnle(idx_nucleus: int, span: GestureSpan) -> float:
    """Normalised nucleus localisation error of one detection.

    ``|nucleus - (start + end) / 2 + 1| / (end - start + 1)``. The ``+ 1``
    makes the error smallest one frame left of the span centre.

    Raises:
        NucleusOutsideSpan: the nucleus is not inside the span.
    """
    if not span.start <= idx_nucleus <= span.end:
        raise NucleusOutsideSpan(f"nucleus {idx_nucleus} outside span [{span.start}, {span.end}]")
    return abs(idx_nucleus - (span.start + span.end) / 2 + 1) / (span.end - span.start + 1)


@dataclass
class EvalReport:
    accuracy: float | None
    accuracy_std: float | None
    mean_nnle: float | None
    std_nnle: float | None
    n_streams: int
    n_gestures: int
    n_matched: int
    unmatched_predictions: int
    missed_gestures: int
    per_class: dict[int, dict[str, int]] = field(default_factory=dict)
    nnle_values: list[float] = field(default_factory=list, repr=False)
    stream_accuracies: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["per_class"] = {str(k): v for k, v in sorted(self.per_class.items())}
        del obj["nnle_values"], obj["stream_accuracies"]
        return obj

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _mean_std(values: Sequence[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def match_records(records, truth: Sequence[GestureSpan]):
    """Pair records with the truth span containing their nucleus.

    A pair needs matching classes, and each span takes at most one record,
    the one with the earliest nucleus. Returns ``(pairs, unmatched_records)``.
    """
    starts = [s.start for s in truth]
    taken = [False] * len(truth)
    pairs, unmatched = [], []
    for rec in sorted(records, key=lambda r: (r.nucleus, r.class_id)):
        i = bisect.bisect_right(starts, rec.nucleus) - 1
        if i >= 0 and rec.nucleus <= truth[i].end and truth[i].class_id == rec.class_id and not taken[i]:
            taken[i] = True
            pairs.append((rec, truth[i]))
        else:
            unmatched.append(rec)
    return pairs, unmatched


def match_and_score(records, truth: Sequence[GestureSpan],
                    y_true: Sequence[int] | None = None) -> EvalReport:
    """Score one stream's annotations against its ground truth."""
    truth = list(truth)
    if y_true is None:
        y_true = [s.class_id for s in truth]
    ordered = sorted(records, key=lambda r: (r.nucleus, r.class_id))
    y_pred = [r.class_id for r in ordered]
    pairs, unmatched = match_records(ordered, truth)
    errors = [nnle(rec.nucleus, span) for rec, span in pairs]

    per_class: dict[int, dict[str, int]] = {}
    for s in truth:
        per_class.setdefault(s.class_id, {"true": 0, "predicted": 0, "matched": 0})["true"] += 1
    for r in ordered:
        per_class.setdefault(r.class_id, {"true": 0, "predicted": 0, "matched": 0})["predicted"] += 1
    for r, _ in pairs:
        per_class[r.class_id]["matched"] += 1

    accs = [accuracy(y_pred, y_true)] if len(y_true) else []
    acc, acc_std = _mean_std(accs)
    m, sd = _mean_std(errors)
    return EvalReport(
        accuracy=acc, accuracy_std=acc_std, mean_nnle=m, std_nnle=sd,
        n_streams=1, n_gestures=len(truth), n_matched=len(pairs),
        unmatched_predictions=len(unmatched), missed_gestures=len(truth) - len(pairs),
        per_class=per_class, nnle_values=errors, stream_accuracies=accs,
    )


def combine_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Pool per-stream reports: accuracy is averaged over streams, NNLE over matches."""
    accs = [a for r in reports for a in r.stream_accuracies]
    errors = [e for r in reports for e in r.nnle_values]
    per_class: dict[int, dict[str, int]] = {}
    for r in reports:
        for c, counts in r.per_class.items():
            slot = per_class.setdefault(c, {"true": 0, "predicted": 0, "matched": 0})
            for k, v in counts.items():
                slot[k] += v
    acc, acc_std = _mean_std(accs)
    m, sd = _mean_std(errors)
    return EvalReport(
        accuracy=acc, accuracy_std=acc_std, mean_nnle=m, std_nnle=sd,
        n_streams=sum(r.n_streams for r in reports),
        n_gestures=sum(r.n_gestures for r in reports),
        n_matched=sum(r.n_matched for r in reports),
        unmatched_predictions=sum(r.unmatched_predictions for r in reports),
        missed_gestures=sum(r.missed_gestures for r in reports),
        per_class=dict(sorted(per_class.items())),
        nnle_values=errors, stream_accuracies=accs,
    )


def evaluate(predictions: Mapping[str, Sequence], streams) -> EvalReport:
    """Score annotations keyed by stream_id against labeled streams.

    Streams without predictions count as empty predictions.
    """
    reports = [match_and_score(predictions.get(s.stream_id, []), s.spans or ()) for s in streams]
    return combine_reports(reports)


def _fmt(x: float | None, pct: bool = False) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return f"{100 * x:.1f}" if pct else f"{x:.3f}"


def render_table(rows: Sequence[tuple[str, EvalReport]]) -> str:
    """Aligned text table: one row per model variant, accuracy and NNLE with their std."""
    header = ("Variant", "Accuracy (%)", "Acc std", "NNLE", "NNLE std")
    body = [(name, _fmt(r.accuracy, True), _fmt(r.accuracy_std, True),
             _fmt(r.mean_nnle), _fmt(r.std_nnle)) for name, r in rows]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]

    def line(row):
        first = row[0].ljust(widths[0])
        rest = [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        return "  ".join([first, *rest])

    rule = "-" * len(line(header))
    return "\n".join([rule, line(header), rule, *(line(r) for r in body), rule])
