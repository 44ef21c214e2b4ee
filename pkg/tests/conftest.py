import numpy as np
import pytest

from sharedspace import EmbeddingEnsemble, EmbeddingSet

_criteria = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_ensemble(rng, k, n, d):
    return EmbeddingEnsemble.from_matrices([rng.standard_normal((n, d)) for _ in range(k)])


def make_set(matrix, words=None):
    matrix = np.asarray(matrix, dtype=float)
    if words is None:
        words = [f"w{t}" for t in range(matrix.shape[0])]
    return EmbeddingSet(words, matrix)


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[number] = (title, report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcome = _criteria[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {number:>2}: {title}")
