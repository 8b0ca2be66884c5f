from pathlib import Path
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hermflow.config import random_bandlimited
from hermflow.torus import make_grid

settings.register_profile(
    "hermflow",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("hermflow")


@pytest.fixture(scope="session")
def grid2():
    return make_grid(2, [16, 16, 1, 1])


@pytest.fixture(scope="session")
def grid2_small():
    return make_grid(2, [8, 8, 1, 1])


@pytest.fixture(scope="session")
def grid2_full():
    return make_grid(2, [8, 8, 8, 8])


@pytest.fixture(scope="session")
def grid3():
    return make_grid(3, [8, 8, 8, 1, 8, 1])


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


def bandlimited(grid, amplitude, seed, max_k=3):
    return random_bandlimited(grid, amplitude, max_k, seed)


SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def scenario_paths():
    paths = sorted(SCENARIO_DIR.glob("*.json"))
    assert paths, "no shipped scenarios found"
    return paths


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
