import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

CACHE = Path(os.environ.get("VTFIELD_CACHE", Path(__file__).resolve().parent.parent / ".cache"))

# acceptance verdicts, printed at the end of the session
VERDICTS = {}


def record_verdict(number, passed, detail):
    VERDICTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        passed, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def cache_dir():
    CACHE.mkdir(parents=True, exist_ok=True)
    return CACHE


@pytest.fixture(scope="session")
def small_records():
    """Two simulated interactions (hex, cylinder) for fast unit tests."""
    from vtfield.sim.dataset import generate_record
    return [generate_record("hex", 0, "train", 5, 0), generate_record("cylinder", 0, "train", 5, 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
