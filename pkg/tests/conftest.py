import numpy as np
import pytest

from organalloc.model import validate_model
from organalloc.synthetic import GridParams, grid_model, random_model


def tiny_bundle(**overrides):
    """2 states, 2 periods, moderate mixing; death certain after period 1."""
    P0 = [[1, 0, 0], [0.1, 0.6, 0.3], [0.2, 0.3, 0.5]]
    P1 = [[1, 0, 0], [1, 0, 0], [1, 0, 0]]
    raw = {
        "n_states": 2,
        "horizon_T": 2,
        "period_days": 30,
        "transition": [P0, P1],
        "initial_dist": [0.4, 0.6],
        "life_gain": [[100.0, 250.0], [80.0, 40.0]],
        "pt_life": [[900.0, 700.0], [800.0, 600.0]],
        "organ_rate": 104,
        "patient_rate": 173,
    }
    raw.update(overrides)
    return raw


@pytest.fixture
def tiny():
    return validate_model(tiny_bundle())


def small_instances(count, seed=0, max_n=3, max_T=4):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        T = int(rng.integers(1, max_T + 1))
        out.append(random_model(rng, n, T))
    return out


@pytest.fixture(scope="session")
def instances():
    return small_instances(100, seed=20240611)


@pytest.fixture(scope="session")
def grid10():
    return grid_model(GridParams(horizon_T=10))


@pytest.fixture(scope="session")
def grid100():
    return grid_model()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
