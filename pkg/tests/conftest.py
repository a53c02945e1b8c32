import os
import sys

import pytest

HERE = os.path.dirname(__file__)
sys.path.insert(0, HERE)
sys.path.insert(0, os.path.join(HERE, "oracles"))

from fowlerlab.params import ProblemConfig  # noqa: E402

# acceptance results collected by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def cor1():
    return ProblemConfig(n=5, eta=0, K1=-1, K2=1, q1=4, q2=4)


@pytest.fixture(scope="session")
def cor2():
    return ProblemConfig(n=5, eta=0, K1=1, K2=-1, q1=3, q2=3)


@pytest.fixture(scope="session")
def hardy():
    return ProblemConfig(n=5, eta=1, K1=-1, K2=1, q1=4, q2=4)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
