"""Shared fixtures plus the acceptance-criteria result board."""

from __future__ import annotations

import numpy as np
import pytest

_BOARD: list[tuple[str, str, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line and assert it; failures stay on the board."""

    def record(name: str, ok: bool, detail: str = ""):
        _BOARD.append((name, "PASS" if ok else "FAIL", detail))
        assert ok, f"{name}: {detail}"

    return record


@pytest.fixture
def criterion_skip():
    def record(name: str, reason: str):
        _BOARD.append((name, "SKIP", reason))
        pytest.skip(f"{name}: {reason}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _BOARD:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, status, detail in _BOARD:
        line = f"{status:<5} {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
