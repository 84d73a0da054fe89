import numpy as np
import pytest

from paretotame.cli import load_problem

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def problems():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_problem(name + ".prob")
        return cache[name]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
