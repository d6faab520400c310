import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record():
    def _record(name, passed, detail=""):
        ACCEPTANCE_RESULTS.append((name, bool(passed), detail))
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}  {detail}")
