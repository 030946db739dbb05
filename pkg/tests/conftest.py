from __future__ import annotations

import numpy as np
import pytest

from consensus_dispatch.graph import build_graph
from consensus_dispatch.model import ConsumerParams, GeneratorParams, Scenario

# lines recorded by test_acceptance, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def two_node() -> Scenario:
    return Scenario(
        (GeneratorParams(alpha=0.01, beta=5.0, gamma=0.0, p_max=200.0),),
        (ConsumerParams(sigma=0.05, omega=10.0, p_max=150.0),),
    )


def random_scenario(rng: np.random.Generator, n_gen: int, n_load: int) -> Scenario:
    gens = tuple(
        GeneratorParams(
            alpha=rng.uniform(0.005, 0.05),
            beta=rng.uniform(2.0, 8.0),
            gamma=rng.uniform(0.0, 5.0),
            p_max=rng.uniform(80.0, 200.0),
        )
        for _ in range(n_gen)
    )
    loads = tuple(
        ConsumerParams(
            sigma=rng.uniform(0.02, 0.1),
            omega=rng.uniform(6.0, 14.0),
            p_max=rng.uniform(30.0, 100.0),
        )
        for _ in range(n_load)
    )
    return Scenario(gens, loads)


def random_connected_graph(rng: np.random.Generator, n: int, extra: float = 0.2):
    """Random spanning tree plus each remaining pair with probability ``extra``."""
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        u = int(order[k])
        v = int(order[rng.integers(0, k)])
        edges.add((min(u, v), max(u, v)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra:
                edges.add((i, j))
    return build_graph(n, sorted(edges))
