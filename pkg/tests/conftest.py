import re

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_prob_matrix(rng, L, K):
    """Random row-stochastic (L, K + 1) matrix, blank in the last column."""
    return rng.dirichlet(np.ones(K + 1), size=L)


# One PASS/FAIL line per acceptance criterion, aggregated over parametrisations.
_CRITERIA: dict[str, bool] = {}
_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+?)(?:\[|$)")


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    key = f"{match.group(1)} {match.group(2).replace('_', ' ')}"
    ok = report.passed or (report.when != "call" and not report.failed)
    _CRITERIA[key] = _CRITERIA.get(key, True) and ok and not report.skipped


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k.split()[0])):
        terminalreporter.write_line(f"{'PASS' if _CRITERIA[key] else 'FAIL'}  criterion {key}")
