"""Keep a propagation state valid while the graph and its signal change.

Each change first repairs the estimate/residual identity locally by adding
residual increments on the few nodes whose per-node equation broke, then
runs the push loop to restore the residual thresholds.  Only degrees of the
event endpoints change, so only the endpoints and their neighbors are
touched before pushing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import EventKind, Graph, GraphError, GraphEvent, MissingEdgeError, DuplicateEdgeError
from .propagation import (
    PropagationConfig,
    PropagationState,
    PushStats,
    as_signal_matrix,
    basic_propagate,
)


@dataclass
class UpdateReport:
    events_applied: int = 0
    residual_increments: int = 0
    push_stats: PushStats = field(default_factory=PushStats)
    # batch_update(record=True) only: per-node pre-push increments, n x d
    scale_increments: np.ndarray | None = None
    reconnect_increments: np.ndarray | None = None

    def merge(self, other: UpdateReport) -> None:
        self.events_applied += other.events_applied
        self.residual_increments += other.residual_increments
        self.push_stats += other.push_stats


class ReplayError(GraphError):
    """An event in a sequence was invalid; earlier events stay applied."""

    def __init__(self, index: int, event: GraphEvent, cause: Exception, report: UpdateReport):
        self.index = index
        self.event = event
        self.report = report
        super().__init__(f"event #{index} ({event}): {cause}")


def _scatter(state: PropagationState, nodes: list[int], rows: list[np.ndarray]) -> int:
    idx = np.asarray(nodes, dtype=np.intp)
    delta = np.vstack(rows)
    uniq, inv = np.unique(idx, return_inverse=True)
    total = np.zeros((len(uniq), state.dims))
    np.add.at(total, inv, delta)
    state.residual[uniq] += total
    return int(np.count_nonzero(total))


def event_increments(
    g: Graph, state: PropagationState, cfg: PropagationConfig, ev: GraphEvent
) -> int:
    """Mutate ``g`` by ``ev`` and add the repairing residual increments.

    No pushing happens here.  Both endpoint corrections read the state as it
    was before the event, so they are independent of evaluation order.
    Returns the number of nonzero residual entries written.
    """
    g.check_event(ev)
    u, v = ev.u, ev.v
    a = cfg.alpha
    b = cfg.beta
    old_deg = {u: g.degree[u], v: g.degree[v]}
    old_nbrs = {u: list(g.adjacency[u]), v: list(g.adjacency[v])}
    est = state.estimate
    base = {
        s: est[s] + a * state.residual[s] - a * state.signal[s] for s in (u, v)
    }
    g.apply(ev)
    deg = g.degree
    sign = 1.0 if ev.kind is EventKind.INSERT else -1.0

    nodes: list[int] = []
    rows: list[np.ndarray] = []
    for s, t in ((u, v), (v, u)):
        d_old, d_new = old_deg[s], deg[s]
        own = base[s] * ((d_old**b - d_new**b) / d_new**b)
        own = own + sign * (1.0 - a) * est[t] / (d_new**b * deg[t] ** (1.0 - b))
        nodes.append(s)
        rows.append(own / a)
        # old neighbor set, self-loop included; on deletion this still
        # contains t, whose term completes the removal of the (s, t) link
        nb = np.asarray(old_nbrs[s], dtype=np.intp)
        scale = (1.0 / d_new ** (1.0 - b) - 1.0 / d_old ** (1.0 - b)) * (1.0 - a) / a
        coef = scale / np.asarray([deg[w] for w in old_nbrs[s]], dtype=np.float64) ** b
        nodes.extend(nb.tolist())
        rows.append(coef[:, None] * est[s][None, :])
    return _scatter(state, nodes, rows)


def apply_event(
    g: Graph,
    state: PropagationState,
    cfg: PropagationConfig,
    ev: GraphEvent,
    threads: int = 1,
) -> UpdateReport:
    """Apply one edge event and re-establish the residual thresholds.

    An invalid event raises before the graph or state is touched.
    """
    if state.node_count != g.node_count:
        raise ValueError(f"state has {state.node_count} rows, graph has {g.node_count} nodes")
    written = event_increments(g, state, cfg, ev)
    stats = basic_propagate(g, cfg, state, threads=threads)
    return UpdateReport(events_applied=1, residual_increments=written, push_stats=stats)


def apply_events(
    g: Graph,
    state: PropagationState,
    cfg: PropagationConfig,
    events: Iterable[GraphEvent],
    threads: int = 1,
) -> UpdateReport:
    report = UpdateReport()
    for i, ev in enumerate(events):
        try:
            step = apply_event(g, state, cfg, ev, threads=threads)
        except GraphError as exc:
            raise ReplayError(i, ev, exc, report) from exc
        report.merge(step)
    return report


def net_changes(
    g: Graph, events: Sequence[GraphEvent]
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Validate ``events`` as a sequence against ``g`` without mutating it.

    Returns the net ``(added, removed)`` edge lists.  Raises ``ReplayError``
    naming the first event that would fail on sequential replay.
    """
    overlay: dict[tuple[int, int], bool] = {}
    for i, ev in enumerate(events):
        key = (ev.u, ev.v) if ev.u < ev.v else (ev.v, ev.u)
        try:
            g._check_pair(ev.u, ev.v)
            present = overlay.get(key)
            if present is None:
                present = g.has_edge(*key)
            if ev.kind is EventKind.INSERT:
                if present:
                    raise DuplicateEdgeError(f"duplicate edge {key}")
                overlay[key] = True
            else:
                if not present:
                    raise MissingEdgeError(f"missing edge {key}")
                overlay[key] = False
        except GraphError as exc:
            raise ReplayError(i, ev, exc, UpdateReport()) from exc
    added = sorted(k for k, now in overlay.items() if now and not g.has_edge(*k))
    removed = sorted(k for k, now in overlay.items() if not now and g.has_edge(*k))
    return added, removed


def batch_update(
    g: Graph,
    state: PropagationState,
    cfg: PropagationConfig,
    events: Sequence[GraphEvent],
    threads: int = 1,
    push: bool = True,
    record: bool = False,
) -> UpdateReport:
    """Advance ``g`` by a whole batch and repair the state in two phases.

    Phase 1 rescales the estimate of every node whose neighborhood changed
    so that ``est(u) / d(u)^(1-beta)`` is preserved, compensating in
    ``r(u)``; neighbors of ``u`` then need no correction.  Phase 2 adds the
    degree term and the contributions of added and removed neighbors, reading
    the rescaled estimates.  Nodes whose net neighborhood is unchanged are
    left alone.  A jointly invalid batch raises before any mutation.

    With ``push=False`` the state is left right after phase 2, which is what
    the increment-equivalence checks compare.
    """
    events = list(events)
    if state.node_count != g.node_count:
        raise ValueError(f"state has {state.node_count} rows, graph has {g.node_count} nodes")
    added, removed = net_changes(g, events)

    a = cfg.alpha
    b = cfg.beta
    gained: dict[int, list[int]] = {}
    lost: dict[int, list[int]] = {}
    for x, y in added:
        gained.setdefault(x, []).append(y)
        gained.setdefault(y, []).append(x)
    for x, y in removed:
        lost.setdefault(x, []).append(y)
        lost.setdefault(y, []).append(x)
    affected = np.asarray(sorted(set(gained) | set(lost)), dtype=np.intp)
    d_old = np.asarray([g.degree[u] for u in affected], dtype=np.float64)

    for x, y in removed:
        g.delete_edge(x, y)
    for x, y in added:
        g.insert_edge(x, y)

    report = UpdateReport(events_applied=len(events))
    n, dims = state.estimate.shape
    if record:
        report.scale_increments = np.zeros((n, dims))
        report.reconnect_increments = np.zeros((n, dims))
    if len(affected):
        d_new = np.asarray([g.degree[u] for u in affected], dtype=np.float64)
        est = state.estimate
        res = state.residual

        # phase 1: every affected node, before any phase-2 read
        old_p1 = d_old ** (1.0 - b)
        new_p1 = d_new ** (1.0 - b)
        est[affected] *= (new_p1 / old_p1)[:, None]
        dr1 = est[affected] * ((old_p1 - new_p1) / (a * new_p1))[:, None]
        res[affected] += dr1

        # phase 2: writes only r(u), reads frozen estimates
        deg = g.degree
        new_pb = d_new**b
        dr2 = (est[affected] + a * res[affected] - a * state.signal[affected]) * (
            (d_old**b - new_pb) / new_pb
        )[:, None]
        for i, u in enumerate(affected.tolist()):
            link = np.zeros(dims)
            for t in gained.get(u, ()):
                link += est[t] / deg[t] ** (1.0 - b)
            for t in lost.get(u, ()):
                link -= est[t] / deg[t] ** (1.0 - b)
            dr2[i] += (1.0 - a) * link / new_pb[i]
        dr2 /= a
        res[affected] += dr2

        report.residual_increments = int(np.count_nonzero(dr1) + np.count_nonzero(dr2))
        if record:
            report.scale_increments[affected] = dr1
            report.reconnect_increments[affected] = dr2
    if push:
        report.push_stats = basic_propagate(g, cfg, state, threads=threads)
    return report


def update_attributes(
    g: Graph,
    state: PropagationState,
    cfg: PropagationConfig,
    X_new,
    threads: int = 1,
) -> UpdateReport:
    """Swap in a new signal matrix: the residual absorbs ``X_new - X``."""
    X_new = as_signal_matrix(X_new)
    if X_new.shape != state.signal.shape:
        raise ValueError(f"signal shape {X_new.shape} does not match state {state.signal.shape}")
    delta = X_new - state.signal
    state.residual += delta
    state.signal = X_new.copy()
    stats = basic_propagate(g, cfg, state, threads=threads)
    return UpdateReport(residual_increments=int(np.count_nonzero(delta)), push_stats=stats)
