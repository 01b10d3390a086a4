from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from hjident.core import TimeSeriesRecord

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


def make_series(p, y, p0=None):
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    p0 = np.ones(len(p)) if p0 is None else np.asarray(p0, dtype=float)
    return [TimeSeriesRecord(t + 1, float(y[t]), float(p0[t]), tuple(p[t])) for t in range(len(p))]


@pytest.fixture
def data_dir() -> Path:
    return DATA


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_acceptance():
    """Store and print the verdict of one acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"ACCEPTANCE {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"ACCEPTANCE {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}")
