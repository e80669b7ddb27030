"""Dynamic stochastic block model with migrating nodes.

Blocks are contiguous id ranges of size ``n // blocks``; leftover nodes join
the last block.  Edges come from expected-degree pairing: each node draws a
Poisson number of partners (mean half the target degree, since each edge
serves both endpoints) and duplicates are redrawn.  A migration step moves
nodes to a new block by deleting their edges into the old block and wiring
them to random members of the new one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphEvent


class SbmError(ValueError):
    pass


@dataclass(frozen=True)
class SbmConfig:
    nodes: int
    blocks: int
    intra_degree: float
    inter_degree: float
    migrants_per_step: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.blocks < 2:
            raise SbmError(f"need at least 2 blocks, got {self.blocks}")
        if self.nodes < self.blocks:
            raise SbmError(f"{self.nodes} nodes cannot fill {self.blocks} blocks")
        if self.intra_degree < 0 or self.inter_degree < 0:
            raise SbmError("expected degrees must be >= 0")
        if not 0 <= self.migrants_per_step <= self.nodes:
            raise SbmError(f"migrants_per_step must lie in [0, {self.nodes}]")

    def block_sizes(self) -> list[int]:
        size = self.nodes // self.blocks
        sizes = [size] * self.blocks
        sizes[-1] += self.nodes - size * self.blocks
        return sizes


def initial_labels(cfg: SbmConfig) -> np.ndarray:
    return np.repeat(np.arange(cfg.blocks), cfg.block_sizes())


def _check_feasible(cfg: SbmConfig) -> None:
    smallest = min(cfg.block_sizes())
    if cfg.intra_degree >= smallest:
        raise SbmError(
            f"intra_degree={cfg.intra_degree} infeasible: smallest block has {smallest} nodes"
        )
    outside = cfg.nodes - max(cfg.block_sizes())
    if cfg.inter_degree >= outside:
        raise SbmError(
            f"inter_degree={cfg.inter_degree} infeasible: only {outside} nodes outside the largest block"
        )


def _wire(g: Graph, rng: np.random.Generator, u: int, pool: np.ndarray, count: int) -> list[int]:
    """Connect ``u`` to ``count`` distinct new partners from ``pool``; returns them."""
    chosen: list[int] = []
    if count <= 0 or len(pool) == 0:
        return chosen
    tries = 0
    limit = 20 * count + 20
    while len(chosen) < count and tries < limit:
        tries += 1
        t = int(pool[rng.integers(len(pool))])
        if t == u or g.has_edge(u, t):
            continue
        g.insert_edge(u, t)
        chosen.append(t)
    return chosen


def sbm_init(cfg: SbmConfig) -> tuple[Graph, np.ndarray, np.random.Generator]:
    """Initial SBM graph, block labels, and the generator to keep using for migrations."""
    _check_feasible(cfg)
    rng = np.random.default_rng(cfg.seed)
    labels = initial_labels(cfg)
    g = Graph(cfg.nodes)
    members = [np.flatnonzero(labels == b) for b in range(cfg.blocks)]
    everyone = np.arange(cfg.nodes)
    for u in range(cfg.nodes):
        own = members[labels[u]]
        _wire(g, rng, u, own, int(rng.poisson(cfg.intra_degree / 2.0)))
        k_out = int(rng.poisson(cfg.inter_degree / 2.0))
        if k_out:
            others = everyone[labels != labels[u]]
            _wire(g, rng, u, others, k_out)
    return g, labels, rng


def sbm_migrate(
    g: Graph,
    labels: np.ndarray,
    cfg: SbmConfig,
    rng: np.random.Generator,
    count: int | None = None,
) -> list[GraphEvent]:
    """Events moving ``count`` (default ``migrants_per_step``) random nodes to new blocks.

    ``g`` is left untouched; the events replay cleanly against it in order.
    ``labels`` is updated in place.
    """
    k = cfg.migrants_per_step if count is None else count
    if not 0 <= k <= cfg.nodes:
        raise SbmError(f"cannot migrate {k} of {cfg.nodes} nodes")
    if k == 0:
        return []
    work = g.copy()
    events: list[GraphEvent] = []
    wire_count = int(round(cfg.intra_degree))
    for u in rng.choice(cfg.nodes, size=k, replace=False).tolist():
        old = int(labels[u])
        for t in sorted(t for t in work.adjacency[u] if t != u and labels[t] == old):
            work.delete_edge(u, t)
            events.append(GraphEvent.delete(u, t))
        new = int(rng.integers(cfg.blocks - 1))
        if new >= old:
            new += 1
        pool = np.flatnonzero(labels == new)
        for t in _wire(work, rng, u, pool, wire_count):
            events.append(GraphEvent.insert(u, t))
        labels[u] = new
    return events


def sparse_features(
    n: int, d: int, rng: np.random.Generator, density: float = 0.01
) -> np.ndarray:
    """Dense ``n x d`` matrix with about ``density`` of entries uniform in (0, 1]; the rest zero."""
    X = np.zeros((n, d))
    mask = rng.random((n, d)) < density
    X[mask] = 1.0 - rng.random(int(mask.sum()))
    return X


def intra_inter_degrees(g: Graph, labels: np.ndarray) -> tuple[float, float]:
    """Mean per-node count of intra-block and inter-block neighbors."""
    intra = inter = 0
    for u, v in g.edges():
        if labels[u] == labels[v]:
            intra += 2
        else:
            inter += 2
    return intra / g.node_count, inter / g.node_count
