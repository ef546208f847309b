"""Connectionist Temporal Classification.

Probability matrices are ``(L, K + 1)`` arrays whose last column is the
blank. The forward-backward recursion runs entirely in log space so that
windows of a few hundred frames do not underflow.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_softmax

from .exceptions import DimensionMismatch, TargetTooLong, TooLargeForOracle

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class SpikeEvent:
    class_id: int
    frame: int
    peak_prob: float
    support: tuple[int, int]  # inclusive frame range


def blank_index(M: np.ndarray) -> int:
    return M.shape[-1] - 1


def extend_with_blanks(labels: Sequence[int], blank: int) -> np.ndarray:
    """Interleave ``labels`` with blanks: ``[b, l1, b, l2, ..., b]``."""
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def min_frames_needed(labels: Sequence[int]) -> int:
    """Shortest input that can emit ``labels``: one frame per label plus a
    separating blank between each pair of equal neighbours."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _check_target(n_frames: int, n_cols: int, labels: Sequence[int]) -> None:
    K = n_cols - 1
    for lab in labels:
        if not 0 <= lab < K:
            raise DimensionMismatch(f"label {lab} is not a gesture class in [0, {K})")
    need = min_frames_needed(labels)
    if n_frames < need:
        raise TargetTooLong(f"{len(labels)} labels need {need} frames, window has {n_frames}")


def _forward_backward(log_probs: np.ndarray, targets: Sequence[Sequence[int]]):
    """Batched log-space alpha/beta recursion.

    Args:
        log_probs: ``(B, T, C)`` log-probabilities, blank in column ``C - 1``.
        targets: B label sequences, already checked for feasibility.

    Returns:
        ``(log_likelihood (B,), log_occupancy (B, T, C))`` where the occupancy
        is the posterior probability of emitting class ``c`` at frame ``t``.
    """
    B, T, C = log_probs.shape
    blank = C - 1
    S = 2 * max((len(t) for t in targets), default=0) + 1
    ext = np.full((B, S), blank, dtype=np.int64)
    lengths = np.empty(B, dtype=np.int64)
    skip = np.zeros((B, S), dtype=bool)
    for b, lab in enumerate(targets):
        e = extend_with_blanks(lab, blank)
        ext[b, : len(e)] = e
        lengths[b] = len(e)
        # s -> s+2 jumps over a blank only between distinct labels
        for s in range(3, len(e), 2):
            skip[b, s] = e[s] != e[s - 2]

    emit = np.take_along_axis(log_probs, np.broadcast_to(ext[:, None, :], (B, T, S)), axis=2)

    neg_inf = -np.inf
    alpha = np.full((B, T, S), neg_inf)
    alpha[:, 0, 0] = emit[:, 0, 0]
    if S > 1:
        has_label = lengths > 1
        alpha[has_label, 0, 1] = emit[has_label, 0, 1]
    shift1 = np.full((B, S), neg_inf)
    shift2 = np.full((B, S), neg_inf)
    with np.errstate(invalid="ignore"):
        for t in range(1, T):
            prev = alpha[:, t - 1]
            shift1[:, 1:] = prev[:, :-1]
            shift2[:, 2:] = np.where(skip[:, 2:], prev[:, :-2], neg_inf)
            alpha[:, t] = np.logaddexp(np.logaddexp(prev, shift1), shift2) + emit[:, t]

    # beta excludes the emission at its own frame
    beta = np.full((B, T, S), neg_inf)
    last = lengths - 1
    beta[np.arange(B), T - 1, last] = 0.0
    has_label = lengths > 1
    beta[np.arange(B)[has_label], T - 1, last[has_label] - 1] = 0.0
    skip_from = np.zeros((B, S), dtype=bool)
    skip_from[:, :-2] = skip[:, 2:]
    with np.errstate(invalid="ignore"):
        for t in range(T - 2, -1, -1):
            nxt = beta[:, t + 1] + emit[:, t + 1]
            s1 = np.full((B, S), neg_inf)
            s2 = np.full((B, S), neg_inf)
            s1[:, :-1] = nxt[:, 1:]
            s2[:, :-2] = np.where(skip_from[:, :-2], nxt[:, 2:], neg_inf)
            beta[:, t] = np.logaddexp(np.logaddexp(nxt, s1), s2)

    b_idx = np.arange(B)
    final = alpha[b_idx, T - 1, last]
    final = np.where(has_label, np.logaddexp(final, alpha[b_idx, T - 1, np.maximum(last - 1, 0)]), final)
    log_lik = final

    log_gamma = alpha + beta - log_lik[:, None, None]
    occupancy = np.full((B, T, C), neg_inf)
    for b in range(B):
        for s in range(lengths[b]):
            c = ext[b, s]
            occupancy[b, :, c] = np.logaddexp(occupancy[b, :, c], log_gamma[b, :, s])
    return log_lik, occupancy


def ctc_loss(M: np.ndarray, labels: Sequence[int]) -> float:
    """Negative log-likelihood (nats) of ``labels`` under probability matrix ``M``.

    Probabilities are floored at ``1e-12`` before the logarithm.

    Raises:
        TargetTooLong: ``labels`` cannot fit into ``len(M)`` frames.
        DimensionMismatch: a label is not a gesture column of ``M``.
    """
    M = np.asarray(M, dtype=float)
    labels = [int(x) for x in labels]
    _check_target(M.shape[0], M.shape[1], labels)
    log_probs = np.log(np.maximum(M, PROB_FLOOR))
    log_lik, _ = _forward_backward(log_probs[None], [labels])
    return float(-log_lik[0])


def ctc_loss_and_grad_batch(logits: np.ndarray, targets: Sequence[Sequence[int]]):
    """Per-window CTC losses and their gradients w.r.t. ``(B, T, C)`` logits."""
    logits = np.asarray(logits, dtype=float)
    for lab in targets:
        _check_target(logits.shape[1], logits.shape[2], lab)
    log_probs = log_softmax(logits, axis=-1)
    log_lik, occupancy = _forward_backward(log_probs, targets)
    grad = np.exp(log_probs) - np.exp(occupancy)
    return -log_lik, grad


def ctc_grad(logits: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """Gradient of ``ctc_loss(softmax(logits), labels)`` w.r.t. ``logits``.

    Equals ``softmax(logits)`` minus the posterior occupancy of each class at
    each frame.
    """
    _, grad = ctc_loss_and_grad_batch(np.asarray(logits, dtype=float)[None], [list(labels)])
    return grad[0]


def collapse(path: Sequence[int], blank: int) -> list[int]:
    """Merge consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for sym in path:
        if sym != prev and sym != blank:
            out.append(int(sym))
        prev = sym
    return out


def _argmax_runs(M: np.ndarray):
    """Yield ``(class, first, last)`` for each maximal non-blank run of the argmax path."""
    blank = blank_index(M)
    path = np.argmax(M, axis=1)
    t = 0
    T = len(path)
    while t < T:
        c = path[t]
        u = t
        while u + 1 < T and path[u + 1] == c:
            u += 1
        if c != blank:
            yield int(c), t, u
        t = u + 1


def greedy_decode(M: np.ndarray) -> tuple[list[int], list[int]]:
    """Best-path decoding.

    Returns:
        The collapsed label sequence and, for each label, the frame of its
        highest probability inside its run.
    """
    M = np.asarray(M, dtype=float)
    labels, frames = [], []
    for c, a, b in _argmax_runs(M):
        labels.append(c)
        frames.append(a + int(np.argmax(M[a : b + 1, c])))
    return labels, frames


def extract_spikes(M: np.ndarray, min_peak: float = 0.0, offset: int = 0) -> list[SpikeEvent]:
    """One SpikeEvent per non-blank argmax run whose peak reaches ``min_peak``.

    ``offset`` converts window-local frames to global frame indices.
    """
    if not 0.0 <= min_peak < 1.0:
        raise ValueError(f"min_peak must lie in [0, 1), got {min_peak}")
    M = np.asarray(M, dtype=float)
    spikes = []
    for c, a, b in _argmax_runs(M):
        local = a + int(np.argmax(M[a : b + 1, c]))
        peak = float(M[local, c])
        if peak >= min_peak:
            spikes.append(SpikeEvent(c, local + offset, peak, (a + offset, b + offset)))
    return spikes


def brute_force_ctc(M: np.ndarray, labels: Sequence[int]) -> float:
    """Sum of path probabilities over every alignment collapsing to ``labels``.

    Test oracle: enumerates all ``(K+1)**L`` paths, so it is limited to
    ``L <= 8`` and ``K <= 3``. Infeasible targets give probability 0.
    """
    M = np.asarray(M, dtype=float)
    L, C = M.shape
    if L > 8 or C - 1 > 3:
        raise TooLargeForOracle(f"oracle limited to L<=8, K<=3; got L={L}, K={C - 1}")
    paths = _paths_by_labelling(L, C).get(tuple(int(x) for x in labels))
    if paths is None:
        return 0.0
    return float(np.prod(M[np.arange(L), paths], axis=1).sum())


@functools.lru_cache(maxsize=None)
def _paths_by_labelling(L: int, C: int) -> dict[tuple[int, ...], np.ndarray]:
    """Every length-L path over C symbols, grouped by what it collapses to."""
    groups: dict[tuple[int, ...], list] = {}
    for path in itertools.product(range(C), repeat=L):
        groups.setdefault(tuple(collapse(path, C - 1)), []).append(path)
    return {k: np.array(v, dtype=np.int64).reshape(len(v), L) for k, v in groups.items()}


__all__ = [
    "SpikeEvent",
    "brute_force_ctc",
    "collapse",
    "ctc_grad",
    "ctc_loss",
    "ctc_loss_and_grad_batch",
    "extend_with_blanks",
    "extract_spikes",
    "greedy_decode",
    "min_frames_needed",
]
