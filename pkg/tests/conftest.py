"""Shared pytest wiring: collects acceptance verdicts for the run summary."""

import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one verdict line, echoed after the whole run finishes."""

    def record(line: str) -> None:
        _VERDICTS.append(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.line(line)
