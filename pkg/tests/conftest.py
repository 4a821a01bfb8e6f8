import time

import numpy as np
import pytest

from rankreward import reference_clusters, reference_market
from rankreward.principal import OptimizeConfig, analytic_optimum, optimize_reward

# lines reported by the acceptance suite, printed once at the end of the run
ACCEPTANCE_LINES = []
# wall-clock seconds of the expensive session fixtures
TIMINGS = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def market():
    return reference_market()


@pytest.fixture(scope="session")
def cluster1():
    return reference_clusters()[0].with_rho(1.0)


@pytest.fixture(scope="session")
def cluster2():
    return reference_clusters()[1].with_rho(1.0)


@pytest.fixture(scope="session")
def clusters():
    return reference_clusters()


@pytest.fixture(scope="session")
def optimum1(cluster1, market):
    return analytic_optimum(cluster1, market)


@pytest.fixture(scope="session")
def searched1(cluster1, market):
    """Reward found by the search on the homogeneous instance (default settings)."""
    t0 = time.perf_counter()
    res = optimize_reward([cluster1], market, OptimizeConfig(seed=0))
    TIMINGS["search_homogeneous"] = time.perf_counter() - t0
    return res


@pytest.fixture(scope="session")
def searched_shared(clusters, market):
    return optimize_reward(clusters, market, OptimizeConfig(seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
