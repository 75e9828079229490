import numpy as np
import pytest

from rfa.model import RegressionModel, sample_dataset


@pytest.fixture
def sines2():
    return RegressionModel(2, "sines", {}, 0.5)


@pytest.fixture
def data2(sines2):
    return sample_dataset(sines2, 120, 7)


@pytest.fixture
def data1():
    return sample_dataset(RegressionModel(1, "step", {}, 0.3), 80, 3)


@pytest.fixture
def queries2():
    return np.random.default_rng(0).random((15, 2))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
