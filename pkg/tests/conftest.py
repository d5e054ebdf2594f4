from __future__ import annotations

import numpy as np
import pytest

from qutritctx import core, engine

# Lines appended by test_acceptance; printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def graph():
    return engine.catalog_graph()


@pytest.fixture(scope="session")
def m(graph):
    return np.array(engine.witness(graph, engine.main_functional(graph)))


@pytest.fixture(scope="session")
def rho_opt(m):
    w, v = np.linalg.eigh(m)
    return np.outer(v[:, 0], v[:, 0].conj())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_density(rng, n=1):
    return core.random_hs_states(rng, n)
