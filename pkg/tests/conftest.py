import numpy as np
import pytest

from emula.events import EventRecord, EventStore, Kind

# filled by test_acceptance.py; printed at the end of the session
ACCEPTANCE: dict = {}


def ev(pid, t, kind, code, value=None):
    return EventRecord(pid, float(t), Kind(kind), code, value)


def store_of(*rows):
    return EventStore(ev(*r) for r in rows)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
