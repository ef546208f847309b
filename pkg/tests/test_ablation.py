import pytest

from gesture_annotator.ablation import ROW_NAMES, benchmark_configs, directional_checks, run_ablation
from gesture_annotator.metrics import EvalReport
from gesture_annotator.synth import SynthConfig
from gesture_annotator.training import TrainConfig


def report(acc, nnle):
    return EvalReport(acc, 0.0, nnle, 0.0, 1, 4, 4, 0, 0)


def rows(*pairs):
    return [(name, report(a, n)) for name, (a, n) in zip(ROW_NAMES, pairs)]


def test_checks_pass_on_expected_ordering():
    checks = directional_checks(rows((0.85, 0.42), (0.88, 0.17), (0.90, 0.16), (0.92, 0.15)))
    assert all(checks.values())


def test_nnle_factor_is_strict():
    checks = directional_checks(rows((0.9, 0.30), (0.9, 0.20), (0.9, 0.2), (0.9, 0.2)))
    assert not checks["ctc_nnle_below_ce_by_factor"]


@pytest.mark.parametrize("ctc_acc, m2m_acc, ok", [
    (0.90, 0.90, True),
    (0.91, 0.91, True),
    (0.93, 0.90, False),
    (0.90, 0.93, False),
])
def test_accuracy_slack_against_both_unaveraged_rows(ctc_acc, m2m_acc, ok):
    checks = directional_checks(rows((0.9, 0.4), (ctc_acc, 0.1), (m2m_acc, 0.1), (0.90, 0.1)))
    assert checks["dynamic_adjustment_accuracy_holds"] is ok


def test_missing_nnle_fails_check():
    checks = directional_checks(rows((0.9, None), (0.9, 0.1), (0.9, 0.1), (0.9, 0.1)))
    assert not checks["ctc_nnle_below_ce_by_factor"]


def test_benchmark_configs():
    synth, tc = benchmark_configs()
    assert (synth.n_classes, synth.dim, synth.seed) == (5, 4, 42)
    assert (tc.window_len, tc.step, tc.seed, tc.n_classes) == (200, 50, 42, 5)


def test_tiny_ablation_runs_all_rows():
    synth = SynthConfig(n_classes=2, dim=2, seed=3)
    tc = TrainConfig(n_classes=2, hidden=4, max_epochs=1, window_len=100, step=25,
                     learning_rate=1e-2, seed=3)
    result = run_ablation(synth, tc, n_train=6, n_test=2)
    assert [name for name, _ in result.rows] == list(ROW_NAMES)
    assert result.checks["all_rows_rendered"]
    assert set(result.train_seconds) == {"ce", "ctc"}
    assert all(name in result.table() for name in ROW_NAMES)
