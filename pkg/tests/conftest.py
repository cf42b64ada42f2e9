import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from emdiff import Dataset, linear_schedule, subsequence  # noqa: E402


@pytest.fixture(scope="session")
def sched():
    return linear_schedule()


@pytest.fixture(scope="session")
def sched50(sched):
    return subsequence(sched, 50)


@pytest.fixture
def cloud5():
    return Dataset(np.random.default_rng(7).normal(size=(5, 2)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
