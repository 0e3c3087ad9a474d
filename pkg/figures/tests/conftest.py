"""Shared acceptance-suite plumbing: a `verdict` fixture that records one
PASS/FAIL line per criterion and replays them all in the terminal summary,
so the per-criterion verdicts are visible even in captured runs."""
from typing import List

import pytest

_VERDICTS: List[str] = []


@pytest.fixture
def verdict():
    def _verdict(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.line(line)
