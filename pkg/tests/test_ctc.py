import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import softmax

from conftest import random_prob_matrix
from gesture_annotator.ctc import (
    SpikeEvent,
    brute_force_ctc,
    collapse,
    ctc_grad,
    ctc_loss,
    extend_with_blanks,
    extract_spikes,
    greedy_decode,
    min_frames_needed,
)
from gesture_annotator.exceptions import DimensionMismatch, TargetTooLong, TooLargeForOracle

B = 9  # blank column used in extension tests


@pytest.mark.parametrize("labels, expected", [
    ([], [B]),
    ([1], [B, 1, B]),
    ([1, 1], [B, 1, B, 1, B]),
])
def test_extend_with_blanks(labels, expected):
    assert extend_with_blanks(labels, B).tolist() == expected


def test_single_frame_loss():
    M = np.array([[0.7, 0.3]])  # class 0, then blank
    assert ctc_loss(M, [0]) == pytest.approx(-math.log(0.7), abs=1e-12)
    assert ctc_loss(M, [0]) == pytest.approx(0.3567, abs=1e-4)


def test_uniform_two_frames():
    # alignments b0, 0b, 00 each have probability 1/4
    M = np.full((2, 2), 0.5)
    assert brute_force_ctc(M, [0]) == pytest.approx(0.75, abs=1e-15)
    assert ctc_loss(M, [0]) == pytest.approx(-math.log(0.75), abs=1e-12)


def test_target_too_long():
    with pytest.raises(TargetTooLong):
        ctc_loss(np.full((1, 2), 0.5), [0, 0])
    with pytest.raises(TargetTooLong):
        ctc_loss(np.full((2, 2), 0.5), [0, 0])
    assert brute_force_ctc(np.full((2, 2), 0.5), [0, 0]) == 0.0


def test_label_outside_classes():
    with pytest.raises(DimensionMismatch):
        ctc_loss(np.full((3, 3), 1 / 3), [2])


def test_min_frames_needed():
    assert min_frames_needed([]) == 0
    assert min_frames_needed([1, 1, 2, 2, 2]) == 8


def test_oracle_guard():
    with pytest.raises(TooLargeForOracle):
        brute_force_ctc(np.full((9, 2), 0.5), [0])
    with pytest.raises(TooLargeForOracle):
        brute_force_ctc(np.full((2, 5), 0.2), [0])


def test_oracle_empty_target_single_frame():
    M = np.array([[0.2, 0.1, 0.7]])
    assert brute_force_ctc(M, []) == pytest.approx(0.7)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32 - 1), st.data())
def test_loss_matches_oracle(L, K, seed, data):
    rng = np.random.default_rng(seed)
    M = random_prob_matrix(rng, L, K)
    labels = data.draw(st.lists(st.integers(0, K - 1), max_size=L))
    if min_frames_needed(labels) > L:
        assert brute_force_ctc(M, labels) == 0.0
        return
    assert math.exp(-ctc_loss(M, labels)) == pytest.approx(brute_force_ctc(M, labels), abs=1e-9)


@pytest.mark.parametrize("L, K", [(1, 1), (2, 2), (3, 2), (4, 1)])
def test_total_probability(L, K, rng):
    M = random_prob_matrix(rng, L, K)
    total = sum(brute_force_ctc(M, list(lab))
                for n in range(L + 1)
                for lab in itertools.product(range(K), repeat=n))
    assert total == pytest.approx(1.0, abs=1e-9)


def _numeric_grad(logits, labels, h=1e-5):
    g = np.zeros_like(logits)
    for idx in np.ndindex(logits.shape):
        up, dn = logits.copy(), logits.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (ctc_loss(softmax(up, axis=1), labels) - ctc_loss(softmax(dn, axis=1), labels)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(5))
def test_grad_finite_differences(seed):
    rng = np.random.default_rng(seed)
    L, K = 6, 3
    logits = rng.normal(size=(L, K + 1))
    labels = [0, 2, 2]
    num = _numeric_grad(logits, labels)
    ana = ctc_grad(logits, labels)
    np.testing.assert_allclose(ana, num, rtol=1e-4, atol=1e-8)


def test_grad_single_frame_is_softmax_minus_onehot():
    logits = np.array([[0.4, -1.2]])
    expected = softmax(logits, axis=1) - np.array([[1.0, 0.0]])
    np.testing.assert_allclose(ctc_grad(logits, [0]), expected, atol=1e-12)


def test_grad_uniform_two_frames_symmetric():
    g = ctc_grad(np.zeros((2, 2)), [0])
    np.testing.assert_allclose(g[0], g[1], atol=1e-15)


def test_grad_rows_sum_to_zero(rng):
    g = ctc_grad(rng.normal(size=(7, 4)), [1, 0, 1])
    np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-12)


def test_long_window_is_finite(rng):
    # 200-frame windows underflow without log-space arithmetic
    logits = rng.normal(size=(200, 6)) * 5
    loss_grad = ctc_grad(logits, [0, 1, 2, 3, 4])
    M = softmax(logits, axis=1)
    assert math.isfinite(ctc_loss(M, [0, 1, 2, 3, 4]))
    assert np.isfinite(loss_grad).all()


def _onehot_rows(path, C, hi=0.9):
    M = np.full((len(path), C), (1 - hi) / (C - 1))
    M[np.arange(len(path)), path] = hi
    return M


def test_greedy_all_blank():
    assert greedy_decode(_onehot_rows([2, 2, 2], 3)) == ([], [])


def test_greedy_separated_repeats():
    b = 3
    M = _onehot_rows([b, 1, 1, b, 1, b], 4)
    M[2, 1] = 0.95  # the first run peaks on its second frame
    M[2] /= M[2].sum()
    labels, frames = greedy_decode(M)
    assert labels == [1, 1]
    assert frames == [2, 4]


def test_greedy_merges_adjacent_runs():
    labels, _ = greedy_decode(_onehot_rows([2, 2, 3], 5))
    assert labels == [2, 3]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=30), st.integers(0, 2**32 - 1))
def test_greedy_argmax_invariance(path, seed):
    rng = np.random.default_rng(seed)
    M = _onehot_rows(path, 4, hi=0.7)
    # strictly monotone row-wise map that keeps the argmax
    warped = M ** rng.uniform(0.5, 3.0, size=(len(path), 1))
    warped /= warped.sum(axis=1, keepdims=True)
    assert greedy_decode(M)[0] == greedy_decode(warped)[0]


def test_extract_spikes():
    L, C = 12, 3
    M = np.tile([0.02, 0.03, 0.95], (L, 1))
    for t, p in zip(range(5, 10), [0.6, 0.8, 0.93, 0.7, 0.55]):
        M[t] = [0.01, p, 0.99 - p]
    assert extract_spikes(np.tile([0.1, 0.1, 0.8], (5, 1))) == []
    spikes = extract_spikes(M, 0.0)
    assert spikes == [SpikeEvent(1, 7, pytest.approx(0.93), (5, 9))]
    assert extract_spikes(M, 0.95) == []
    assert extract_spikes(M, 0.0, offset=100)[0].frame == 107


def test_collapse():
    assert collapse([0, 0, 3, 0, 1, 1, 3], blank=3) == [0, 0, 1]
