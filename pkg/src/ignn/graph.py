"""Mutable undirected graph with permanent self-loops.

Every node carries a self-loop that counts once toward its degree, so
``degree[s] >= 1`` always holds and an isolated node still pushes mass to
itself.  Adjacency lists keep insertion order; deletion swaps the last entry
into the vacated slot, so neighbor order is arbitrary and nothing downstream
may rely on it.
"""
from __future__ import annotations

import enum
import io
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

logger = logging.getLogger(__name__)


class GraphError(ValueError):
    """Base class for graph mutation and parsing errors."""


class DuplicateEdgeError(GraphError):
    pass


class MissingEdgeError(GraphError):
    pass


class SelfLoopEventError(GraphError):
    pass


class NodeRangeError(GraphError):
    pass


class FormatError(GraphError):
    """Malformed text input; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class EventKind(enum.Enum):
    INSERT = "i"
    DELETE = "d"


@dataclass(frozen=True)
class GraphEvent:
    kind: EventKind
    u: int
    v: int

    @classmethod
    def insert(cls, u: int, v: int) -> GraphEvent:
        return cls(EventKind.INSERT, u, v)

    @classmethod
    def delete(cls, u: int, v: int) -> GraphEvent:
        return cls(EventKind.DELETE, u, v)

    def __str__(self) -> str:
        return f"{self.kind.value} {self.u} {self.v}"


@dataclass
class EventLog:
    node_count: int
    events: list[GraphEvent] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[GraphEvent]:
        return iter(self.events)


class Graph:
    """Undirected, unweighted graph over the fixed node set ``0..n-1``."""

    __slots__ = ("node_count", "adjacency", "degree", "edge_count", "_slot", "_packed")

    def __init__(self, n: int):
        if n < 1:
            raise GraphError(f"graph needs at least one node, got {n}")
        self.node_count = n
        self.adjacency: list[list[int]] = [[s] for s in range(n)]
        self.degree: list[int] = [1] * n
        self.edge_count = 0
        # position of each neighbor inside adjacency[s], for O(1) swap-remove
        self._slot: list[dict[int, int]] = [{s: 0} for s in range(n)]
        self._packed: PackedAdjacency | None = None

    def __repr__(self) -> str:
        return f"Graph(n={self.node_count}, m={self.edge_count})"

    def _check_pair(self, u: int, v: int) -> None:
        n = self.node_count
        if not (0 <= u < n and 0 <= v < n):
            raise NodeRangeError(f"node id out of range for n={n}: ({u}, {v})")
        if u == v:
            raise SelfLoopEventError(f"self-loop event on node {u}")

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._slot[u]

    def neighbors(self, s: int) -> list[int]:
        """Neighbors of ``s`` including ``s`` itself.  Do not mutate."""
        return self.adjacency[s]

    def _link(self, a: int, b: int) -> None:
        self._slot[a][b] = len(self.adjacency[a])
        self.adjacency[a].append(b)
        self.degree[a] += 1
        if self._packed is not None:
            self._packed.append(a, b)

    def _unlink(self, a: int, b: int) -> None:
        adj = self.adjacency[a]
        slots = self._slot[a]
        i = slots.pop(b)
        last = adj.pop()
        if last != b:
            adj[i] = last
            slots[last] = i
        self.degree[a] -= 1
        if self._packed is not None:
            self._packed.remove_at(a, i)

    def packed(self) -> PackedAdjacency:
        """Array form of the adjacency, built on first use and kept in sync afterwards."""
        if self._packed is None:
            self._packed = PackedAdjacency(self.adjacency)
        return self._packed

    def insert_edge(self, u: int, v: int) -> None:
        self._check_pair(u, v)
        if self.has_edge(u, v):
            raise DuplicateEdgeError(f"duplicate edge ({u}, {v})")
        self._link(u, v)
        self._link(v, u)
        self.edge_count += 1

    def delete_edge(self, u: int, v: int) -> None:
        self._check_pair(u, v)
        if not self.has_edge(u, v):
            raise MissingEdgeError(f"missing edge ({u}, {v})")
        self._unlink(u, v)
        self._unlink(v, u)
        self.edge_count -= 1

    def check_event(self, ev: GraphEvent) -> None:
        """Raise if ``ev`` cannot be applied to the current graph."""
        self._check_pair(ev.u, ev.v)
        present = self.has_edge(ev.u, ev.v)
        if ev.kind is EventKind.INSERT and present:
            raise DuplicateEdgeError(f"duplicate edge ({ev.u}, {ev.v})")
        if ev.kind is EventKind.DELETE and not present:
            raise MissingEdgeError(f"missing edge ({ev.u}, {ev.v})")

    def apply(self, ev: GraphEvent) -> None:
        if ev.kind is EventKind.INSERT:
            self.insert_edge(ev.u, ev.v)
        else:
            self.delete_edge(ev.u, ev.v)

    def edges(self) -> Iterator[tuple[int, int]]:
        """Undirected non-self-loop edges as ``(u, v)`` with ``u < v``."""
        for u, adj in enumerate(self.adjacency):
            for v in adj:
                if u < v:
                    yield u, v

    def edge_set(self) -> set[tuple[int, int]]:
        return set(self.edges())

    def copy(self) -> Graph:
        g = Graph.__new__(Graph)
        g.node_count = self.node_count
        g.adjacency = [list(a) for a in self.adjacency]
        g.degree = list(self.degree)
        g.edge_count = self.edge_count
        g._slot = [dict(s) for s in self._slot]
        g._packed = None
        return g

    def same_structure(self, other: Graph) -> bool:
        """Order-insensitive adjacency comparison."""
        if self.node_count != other.node_count:
            return False
        return all(
            sorted(a) == sorted(b) for a, b in zip(self.adjacency, other.adjacency)
        )

    def validate(self) -> None:
        """Full scan of the structural invariants; raises ``GraphError``."""
        m2 = 0
        for s, adj in enumerate(self.adjacency):
            if len(adj) != self.degree[s]:
                raise GraphError(f"degree[{s}]={self.degree[s]} but {len(adj)} neighbors")
            if len(set(adj)) != len(adj):
                raise GraphError(f"duplicate neighbor in adjacency[{s}]")
            if adj.count(s) != 1:
                raise GraphError(f"node {s} must carry exactly one self-loop")
            if len(self._slot[s]) != len(adj):
                raise GraphError(f"slot index of node {s} out of sync")
            for i, t in enumerate(adj):
                if self._slot[s].get(t) != i:
                    raise GraphError(f"slot index of node {s} out of sync")
                if t != s:
                    if s not in self._slot[t]:
                        raise GraphError(f"asymmetric edge ({s}, {t})")
                    m2 += 1
        if m2 != 2 * self.edge_count:
            raise GraphError(f"edge_count={self.edge_count} but found {m2 // 2} edges")
        if self._packed is not None:
            for s, adj in enumerate(self.adjacency):
                if self._packed.row(s).tolist() != adj:
                    raise GraphError(f"packed adjacency of node {s} out of sync")


class PackedAdjacency:
    """Neighbor rows stored in one integer array for compiled loops.

    Row ``s`` is ``indices[start[s] : start[s] + length[s]]``, in the same
    order as the list adjacency.  Rows keep spare capacity; a full row moves
    to the end of the buffer with twice the room, and the buffer is compacted
    when relocated rows leave too much dead space.
    """

    def __init__(self, adjacency: list[list[int]]):
        lengths = [len(a) for a in adjacency]
        self.length = np.asarray(lengths, dtype=np.int64)
        self.capacity = np.maximum(2 * self.length, 4)
        self._pack(adjacency, 2 * int(self.capacity.sum()))

    def _pack(self, rows, size: int) -> None:
        n = len(rows)
        self.start = np.zeros(n, dtype=np.int64)
        np.cumsum(self.capacity[:-1], out=self.start[1:])
        self.end = int(self.capacity.sum())
        self.indices = np.empty(size, dtype=np.int64)
        for s in range(n):
            k = int(self.length[s])
            self.indices[self.start[s] : self.start[s] + k] = rows[s][:k]

    def row(self, s: int) -> np.ndarray:
        b = self.start[s]
        return self.indices[b : b + self.length[s]]

    def append(self, s: int, t: int) -> None:
        k = int(self.length[s])
        if k == self.capacity[s]:
            self._grow(s)
        self.indices[self.start[s] + k] = t
        self.length[s] = k + 1

    def remove_at(self, s: int, i: int) -> None:
        """Swap-remove position ``i`` of row ``s`` (mirrors the list adjacency)."""
        k = int(self.length[s]) - 1
        b = self.start[s]
        self.indices[b + i] = self.indices[b + k]
        self.length[s] = k

    def _grow(self, s: int) -> None:
        cap = 2 * int(self.capacity[s])
        if self.end + cap > len(self.indices):
            if int(self.capacity.sum()) + cap <= len(self.indices) // 2:
                rows = [self.row(r).copy() for r in range(len(self.start))]
                self._pack(rows, len(self.indices))
        if self.end + cap > len(self.indices):
            bigger = np.empty(2 * (self.end + cap), dtype=np.int64)
            bigger[: self.end] = self.indices[: self.end]
            self.indices = bigger
        k = int(self.length[s])
        b = self.start[s]
        self.indices[self.end : self.end + k] = self.indices[b : b + k]
        self.start[s] = self.end
        self.capacity[s] = cap
        self.end += cap


def new_graph(n: int) -> Graph:
    return Graph(n)


def graph_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> Graph:
    g = Graph(n)
    for u, v in edges:
        g.insert_edge(u, v)
    return g


# ---- text formats --------------------------------------------------------


def _content_lines(stream: IO[str] | IO[bytes]) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError(f"invalid UTF-8: {exc}", lineno) from None
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, line


def _parse_id(tok: str, lineno: int, source: str | None) -> int:
    if not tok.isdigit():
        raise FormatError(f"bad node id {tok!r}", lineno, source)
    return int(tok)


def _read_header(lines: Iterator[tuple[int, str]], source: str | None) -> int:
    try:
        lineno, line = next(lines)
    except StopIteration:
        raise FormatError("missing 'n <count>' header", None, source) from None
    parts = line.split(" ")
    if len(parts) != 2 or parts[0] != "n":
        raise FormatError(f"expected 'n <count>', got {line!r}", lineno, source)
    n = _parse_id(parts[1], lineno, source)
    if n < 1:
        raise FormatError("node count must be >= 1", lineno, source)
    return n


@dataclass
class LoadResult:
    graph: Graph
    duplicates: int = 0


def load_edge_list(stream: IO[str] | IO[bytes], source: str | None = None) -> LoadResult:
    """Parse an edge-list stream (``n <count>`` header, then ``u v`` lines).

    Duplicate edges (in either orientation) are collapsed and counted.
    """
    lines = _content_lines(stream)
    n = _read_header(lines, source)
    g = Graph(n)
    dups = 0
    for lineno, line in lines:
        parts = line.split(" ")
        if len(parts) != 2:
            raise FormatError(f"expected '<u> <v>', got {line!r}", lineno, source)
        u = _parse_id(parts[0], lineno, source)
        v = _parse_id(parts[1], lineno, source)
        if u >= n or v >= n:
            raise FormatError(f"node id >= n={n}", lineno, source)
        if u == v:
            raise FormatError(f"self-loop edge ({u}, {v}) in edge list", lineno, source)
        if g.has_edge(u, v):
            dups += 1
            continue
        g.insert_edge(u, v)
    if dups:
        logger.warning("collapsed %d duplicate edge(s) while loading %s", dups, source or "edge list")
    return LoadResult(g, dups)


def parse_edge_list(text: str) -> LoadResult:
    return load_edge_list(io.StringIO(text))


def load_events(stream: IO[str] | IO[bytes], source: str | None = None) -> EventLog:
    """Parse an event stream (``n <count>`` header, then ``i|d u v`` lines).

    Only syntax and id ranges are checked here; replay validity depends on
    the graph the log is applied to.
    """
    lines = _content_lines(stream)
    n = _read_header(lines, source)
    log = EventLog(n)
    for lineno, line in lines:
        parts = line.split(" ")
        if len(parts) != 3 or parts[0] not in ("i", "d"):
            raise FormatError(f"expected 'i|d <u> <v>', got {line!r}", lineno, source)
        u = _parse_id(parts[1], lineno, source)
        v = _parse_id(parts[2], lineno, source)
        if u >= n or v >= n:
            raise FormatError(f"node id >= n={n}", lineno, source)
        if u == v:
            raise FormatError(f"self-loop event on node {u}", lineno, source)
        log.events.append(GraphEvent(EventKind(parts[0]), u, v))
    return log


def parse_events(text: str) -> EventLog:
    return load_events(io.StringIO(text))


def write_edge_list(g: Graph, stream: IO[str]) -> None:
    stream.write(f"n {g.node_count}\n")
    for u, v in sorted(g.edges()):
        stream.write(f"{u} {v}\n")


def write_events(log: EventLog, stream: IO[str]) -> None:
    stream.write(f"n {log.node_count}\n")
    for ev in log.events:
        stream.write(f"{ev}\n")


def replay(g: Graph, events: Iterable[GraphEvent]) -> int:
    """Apply events in order, returning how many were applied."""
    count = 0
    for ev in events:
        g.apply(ev)
        count += 1
    return count
