import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from memetrap.community import Partition
from memetrap.graph import from_adjacency

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# property suites that back the invariant criterion run at least this many cases
PROPERTY_CASES = 1000


def graph(n, edges):
    return from_adjacency(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2))


def clique_edges(nodes):
    return list(itertools.combinations(nodes, 2))


def two_cliques_bridge(k):
    """Two k-cliques on 0..k-1 and k..2k-1 joined by the edge (k-1, k)."""
    edges = clique_edges(range(k)) + clique_edges(range(k, 2 * k)) + [(k - 1, k)]
    return graph(2 * k, edges), Partition(np.repeat([0, 1], k))


def path(n):
    return graph(n, [(i, i + 1) for i in range(n - 1)])


@pytest.fixture
def triangle():
    return graph(3, [(0, 1), (1, 2), (0, 2)])


# ---- one PASS/FAIL line per acceptance criterion in the terminal summary

ACCEPTANCE_LINES = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or (rep.when == "setup" and rep.failed)):
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    line = f"{'PASS' if rep.passed else 'FAIL'} criterion {number}: {title}" + (f" [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append((number, line))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
