import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ltlexplore.automaton import bundled_automaton, prune_and_index
from ltlexplore.gridworld import bundled_env, bundled_labeling, generate
from ltlexplore.product import ProductSpace

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def reach_aut():
    return prune_and_index(bundled_automaton("reach_exit"))


@pytest.fixture(scope="session")
def corridor_i():
    return bundled_env("corridor_i")


@pytest.fixture(scope="session")
def corridor_ii():
    return bundled_env("corridor_ii")


@pytest.fixture(scope="session")
def corridor_space(corridor_i, reach_aut):
    return ProductSpace(corridor_i, reach_aut)


@pytest.fixture(scope="session")
def coverage_aut():
    return prune_and_index(bundled_automaton("coverage"))


@pytest.fixture(scope="session")
def coverage_grid():
    return generate(10, 10, bundled_labeling("coverage_10x10_labels"), seed=3)


@pytest.fixture(scope="session")
def sequence_aut():
    return prune_and_index(bundled_automaton("sequence"))


@pytest.fixture(scope="session")
def sequence_grid():
    return generate(10, 10, bundled_labeling("sequence_10x10_labels"), seed=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
