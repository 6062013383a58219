import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import STOPWORDS, write_corpus  # noqa: E402

from bnfakenews.textprep import StopwordList  # noqa: E402


@pytest.fixture
def stops():
    return StopwordList.of(STOPWORDS)


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path / "corpus")


_ACCEPTANCE: list[tuple[str, str, float]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome, report.duration))
    elif report.when == "setup" and report.skipped and "test_acceptance.py" in report.nodeid:
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], "skipped", 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _ACCEPTANCE:
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{status:7s} {name}  ({duration:.2f}s)")
