import numpy as np
import pytest

from critrouter.env import default_env

# criterion id -> (passed, detail), filled by test_acceptance
_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(cid, passed, detail=""):
        _ACCEPTANCE[cid] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def order(cid):
        num = "".join(ch for ch in cid if ch.isdigit())
        return (int(num or 0), cid)

    for cid in sorted(_ACCEPTANCE, key=order):
        ok, detail = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}")


@pytest.fixture
def env():
    return default_env()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
