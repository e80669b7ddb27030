import random
import sys
from dataclasses import dataclass

import numpy as np
import pytest

from ignn.graph import Graph, GraphEvent, graph_from_edges
from ignn.instant_update import batch_update
from ignn.propagation import propagate_from_scratch


def er_graph(n: int, p: float, rng: random.Random) -> Graph:
    g = Graph(n)
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                g.insert_edge(u, v)
    return g


def random_event(g: Graph, rng: random.Random) -> GraphEvent:
    """Toggle a uniformly random node pair: delete if present, else insert."""
    u, v = rng.sample(range(g.node_count), 2)
    if g.has_edge(u, v):
        return GraphEvent.delete(u, v)
    return GraphEvent.insert(u, v)


def random_events(g: Graph, count: int, rng: random.Random) -> list[GraphEvent]:
    """Replay-valid random toggles, generated against a scratch copy of ``g``."""
    work = g.copy()
    out = []
    for _ in range(count):
        ev = random_event(work, rng)
        work.apply(ev)
        out.append(ev)
    return out


def path3() -> Graph:
    g = Graph(3)
    g.insert_edge(0, 1)
    g.insert_edge(1, 2)
    return g


@dataclass
class HandIncrements:
    dr1: float  # summed scaling-phase increments on u
    dr2: float  # summed reconnection-phase increments on u
    estimate: float
    residual: float


def run_worked_example(cfg):
    """Insert {(u,v),(u,y)} as one batch on a 5-node fixture, next to the step-by-step expansion.

    u=0, v=1, y=2 start unconnected to u; nodes 3 and 4 give everyone some degree.
    Returns (graph, state, hand-computed values for u, batch report).
    """
    g = graph_from_edges(5, [(0, 3), (1, 4), (2, 3), (3, 4), (2, 4)])
    a, beta = cfg.alpha, cfg.beta
    state, _ = propagate_from_scratch(g, cfg, [[0.9], [-0.4], [0.3], [0.7], [0.1]])
    u, v, y = 0, 1, 2
    pi = state.estimate[:, 0].copy()
    r = state.residual[:, 0].copy()
    x = state.signal[:, 0].copy()
    d = list(g.degree)
    b1 = 1 - beta

    # inserting (u, v)
    pi_uv = pi[u] * (d[u] + 1) ** b1 / d[u] ** b1
    dr1_uv = pi_uv * (d[u] ** b1 - (d[u] + 1) ** b1) / (a * (d[u] + 1) ** b1)
    rt_uv = r[u] + dr1_uv
    dr2_uv = (
        (pi_uv + a * rt_uv - a * x[u]) * (d[u] ** beta / (d[u] + 1) ** beta - 1)
        + (1 - a) * pi[v] / ((d[u] + 1) ** beta * d[v] ** b1)
    ) / a
    r_uv = rt_uv + dr2_uv
    # then (u, y)
    pi_uy = pi_uv * (d[u] + 2) ** b1 / (d[u] + 1) ** b1
    dr1_uy = pi_uy * ((d[u] + 1) ** b1 - (d[u] + 2) ** b1) / (a * (d[u] + 2) ** b1)
    rt_uy = r_uv + dr1_uy
    dr2_uy = (
        (pi_uy + a * rt_uy - a * x[u]) * ((d[u] + 1) ** beta / (d[u] + 2) ** beta - 1)
        + (1 - a) * pi[y] / ((d[u] + 2) ** beta * d[y] ** b1)
    ) / a
    hand = HandIncrements(dr1_uv + dr1_uy, dr2_uv + dr2_uy, pi_uy, rt_uy + dr2_uy)

    report = batch_update(
        g, state, cfg, [GraphEvent.insert(u, v), GraphEvent.insert(u, y)], push=False, record=True
    )
    return g, state, hand, report


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
