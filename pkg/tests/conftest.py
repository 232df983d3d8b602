import numpy as np
import pytest

from tdlab.mdp import FeatureMap, Mdp, Policy


@pytest.fixture
def two_state():
    """Two states, one action, P = [[0.5, 0.5], [0.2, 0.8]]."""
    p = np.array([[[0.5, 0.5]], [[0.2, 0.8]]])
    return Mdp(p, np.zeros((2, 1)), 0.9), Policy(np.ones((2, 1)))


@pytest.fixture
def one_state():
    """Deterministic self-loop with reward 1 and feature [1]."""
    mdp = Mdp(np.ones((1, 1, 1)), np.ones((1, 1)), 0.0)
    return mdp, Policy(np.ones((1, 1))), FeatureMap(np.ones((1, 1)))


@pytest.fixture(scope="session")
def canonical_sweep():
    """Default protocol (full lr grid, 10 seeds, 20k steps, constant lr) on both benchmarks."""
    from tdlab.config import ExperimentConfig
    from tdlab.harness import sweep

    baird = sweep(ExperimentConfig(env=("baird",), algo=("td", "attd", "gtd2", "tdc", "tdrc")))
    boyan = sweep(ExperimentConfig(env=("boyan",), algo=("attd", "gtd2", "tdc", "td", "htd", "vtrace")))
    return baird, boyan


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
