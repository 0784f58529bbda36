import time

import numpy as np
import pytest

from netred.graph import WeightedGraph
from netred.mas import LinearMas, incidence_output, leader_follower_input
from netred.stabsep import decompose_mas
from netred.sysfile import load_system

SMALL_EDGES = [(1, 6, 5), (2, 5, 3), (2, 6, 2), (3, 4, 1), (3, 5, 2), (3, 6, 3), (4, 5, 5), (5, 6, 2),
               (5, 7, 6), (5, 8, 7), (6, 7, 6), (6, 8, 7), (7, 8, 1), (7, 9, 1), (7, 10, 1)]


def small_graph() -> WeightedGraph:
    return WeightedGraph(10, tuple(SMALL_EDGES))


def small_system() -> LinearMas:
    g = small_graph()
    return LinearMas(g, np.ones(10), leader_follower_input(10, [6, 7]), incidence_output(g))


@pytest.fixture(scope="session")
def small_sys():
    return small_system()


@pytest.fixture(scope="session")
def small_decomp(small_sys):
    return decompose_mas(small_sys)


CENSUS_SECONDS = {}


def _timed_census(sys, metric):
    from netred.search import partition_census
    t0 = time.perf_counter()
    census = partition_census(sys, 5, metric)
    CENSUS_SECONDS[metric] = time.perf_counter() - t0
    return census


@pytest.fixture(scope="session")
def h2_census(small_sys):
    return _timed_census(small_sys, "h2")


@pytest.fixture(scope="session")
def hinf_census(small_sys):
    return _timed_census(small_sys, "hinf")


@pytest.fixture(scope="session")
def vdp():
    return load_system("vanderpol").to_nonlinear_mas()


@pytest.fixture(scope="session")
def vdp_train(vdp):
    from netred.nonlinear import simulate
    return simulate(vdp, u="train", t_span=(0.0, 20.0))


def random_connected_graph(rng, n, p=0.4):
    """Random tree plus extra edges, positive weights."""
    edges = {}
    for v in range(2, n + 1):
        u = int(rng.integers(1, v))
        edges[(u, v)] = float(rng.uniform(0.5, 3.0))
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if (i, j) not in edges and rng.random() < p:
                edges[(i, j)] = float(rng.uniform(0.5, 3.0))
    return WeightedGraph(n, tuple((i, j, w) for (i, j), w in edges.items()))


def random_partition(rng, n, r=None):
    from netred.partition import partition_from_labels
    r = int(rng.integers(1, n + 1)) if r is None else r
    labels = np.concatenate([np.arange(r), rng.integers(0, r, n - r)])
    rng.shuffle(labels)
    return partition_from_labels(labels)


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion and print it."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
