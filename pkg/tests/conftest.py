"""Shared fixtures: the P3 hand-benchmark and small random instances."""

# one PASS/FAIL line per acceptance criterion, emitted after the test
# summary so the lines survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from dualbfgs.problem import QuadraticNodeObjective, make_instance
from dualbfgs.topology import Graph, regular_cycle


@pytest.fixture
def p3_graph():
    """3-node path 0-1-2."""
    return Graph.from_undirected(3, [(0, 1), (1, 2)])


@pytest.fixture
def p3_problem():
    """p=1, a=(1,1,1), b=(1,0,-1): x(0) = (-1, 0, 1), h(0) = 1, x* = 0."""
    objs = [QuadraticNodeObjective(a=np.array([1.0]), b=np.array([float(b)]))
            for b in (1, 0, -1)]
    return make_instance(objs)


@pytest.fixture
def cycle6():
    return regular_cycle(6, 2)


def random_instance(n, p, seed, a_lo=0.5, a_hi=2.0):
    """Small random diagonal quadratic (no condition-regime constraint)."""
    rng = np.random.default_rng(seed)
    objs = [QuadraticNodeObjective(a=rng.uniform(a_lo, a_hi, size=p),
                                   b=rng.uniform(-1.0, 1.0, size=p))
            for _ in range(n)]
    return make_instance(objs)
