import numpy as np
import pytest

from teamdp.instances import binary_instance

# acceptance outcomes, printed once at the end of the session
ACCEPTANCE = {}


def record(criterion, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def binary():
    return binary_instance()
