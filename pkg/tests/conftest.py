import numpy as np
import pytest

from dropmat.segmentation import STANDARD_GRAVITY
from dropmat.simulator import DEFAULT_MATERIALS, DropScenario, simulate

ACCEPTANCE_LINES: list[str] = []

MATERIAL = {m.name: m for m in DEFAULT_MATERIALS}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def marble_drop():
    return simulate(DropScenario(0.8, "screen", MATERIAL["marble"], seed=7))


@pytest.fixture(scope="session")
def quilt_drop():
    return simulate(DropScenario(0.8, "screen", MATERIAL["quilt"], seed=11))


G = STANDARD_GRAVITY
