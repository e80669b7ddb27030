"""Residual push for generalized PPR propagation.

For a graph signal column ``x`` the target is

    pi = sum_l alpha (1 - alpha)^l P^l x,    P = D^-beta A D^(beta-1)

Each column keeps an estimate ``est`` and a residual ``res`` tied together by

    est + alpha * res = alpha * x + (1 - alpha) * P @ est

and pushing drives every ``|res(s)|`` to at most ``epsilon * d(s)^(1-beta)``,
which bounds ``|est(s) - pi(s)|`` by the same quantity.
"""
from __future__ import annotations

import math
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import Graph


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagationConfig:
    alpha: float
    beta: float
    epsilon: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")


def residual_threshold(cfg: PropagationConfig, d: int) -> float:
    """Largest residual magnitude node of degree ``d`` may keep: ``eps * d^(1-beta)``."""
    if d < 1:
        raise ValueError(f"degree must be >= 1, got {d}")
    return cfg.epsilon * d ** (1.0 - cfg.beta)


@dataclass
class PushStats:
    pushes: int = 0
    touched_entries: int = 0
    wall_time: float = 0.0

    def __iadd__(self, other: PushStats) -> PushStats:
        self.pushes += other.pushes
        self.touched_entries += other.touched_entries
        self.wall_time += other.wall_time
        return self


class PropagationState:
    """Estimate, residual and signal matrices (``n x d``, float64)."""

    def __init__(self, estimate: np.ndarray, residual: np.ndarray, signal: np.ndarray):
        if not (estimate.shape == residual.shape == signal.shape) or estimate.ndim != 2:
            raise ValueError(
                f"state matrices must share one 2-D shape, got "
                f"{estimate.shape}, {residual.shape}, {signal.shape}"
            )
        self.estimate = np.ascontiguousarray(estimate, dtype=np.float64)
        self.residual = np.ascontiguousarray(residual, dtype=np.float64)
        self.signal = np.ascontiguousarray(signal, dtype=np.float64)
        self.poisoned = False

    @property
    def node_count(self) -> int:
        return self.estimate.shape[0]

    @property
    def dims(self) -> int:
        return self.estimate.shape[1]

    def copy(self) -> PropagationState:
        st = PropagationState(self.estimate.copy(), self.residual.copy(), self.signal.copy())
        st.poisoned = self.poisoned
        return st

    def __repr__(self) -> str:
        return f"PropagationState(n={self.node_count}, d={self.dims})"


def as_signal_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"signal must be a vector or a matrix, got ndim={X.ndim}")
    return X


def new_state(g: Graph, X) -> PropagationState:
    X = as_signal_matrix(X)
    if X.shape[0] != g.node_count:
        raise ValueError(f"signal has {X.shape[0]} rows, graph has {g.node_count} nodes")
    return PropagationState(np.zeros_like(X), X.copy(), X.copy())


def embedding(state: PropagationState) -> np.ndarray:
    """Read-only view of the estimate matrix (the propagated features ``Z``)."""
    view = state.estimate.view()
    view.flags.writeable = False
    return view


def _node_weights(deg: Sequence[int], cfg: PropagationConfig) -> np.ndarray:
    """``3 x n`` rows: ``1 / d^beta``, ``1 / d^(1-beta)`` and threshold ``eps * d^(1-beta)``."""
    top = max(deg)
    b = cfg.beta
    by_degree = np.array(
        [(0.0, 0.0, 0.0)]
        + [
            (float(d) ** -b, float(d) ** (b - 1.0), cfg.epsilon * float(d) ** (1.0 - b))
            for d in range(1, top + 1)
        ]
    )
    return np.ascontiguousarray(by_degree[np.asarray(deg)].T)


# ---- push backend ----------------------------------------------------------

BACKENDS = ("auto", "python", "compiled")
_backend = "auto"
_compiled_module = None


def _load_compiled():
    global _compiled_module
    if _compiled_module is None:
        try:
            from . import _compiled

            _compiled_module = _compiled
        except ImportError:
            _compiled_module = False
    return _compiled_module or None


def set_push_backend(name: str) -> None:
    """Select the push loop: ``python``, ``compiled`` (needs numba) or ``auto``.

    ``auto`` uses the compiled loop when numba imports and the environment
    variable ``IGNN_PURE_PYTHON`` is unset or ``0``.  Both loops produce
    bit-identical results.
    """
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown push backend {name!r}; expected one of {BACKENDS}")
    if name == "compiled" and _load_compiled() is None:
        raise RuntimeError("compiled push backend needs numba")
    _backend = name


def push_backend() -> str:
    """The backend ``basic_propagate`` will actually use."""
    if _backend == "auto":
        if os.environ.get("IGNN_PURE_PYTHON", "0") not in ("", "0"):
            return "python"
        return "compiled" if _load_compiled() is not None else "python"
    return _backend


def _push_column(
    adj: list[list[int]],
    cfg: PropagationConfig,
    inv_pb: list[float],
    inv_p1: list[float],
    thr: list[float],
    est: list[float],
    res: list[float],
    seeds: Iterable[int],
) -> tuple[int, int]:
    alpha = cfg.alpha
    keep = 1.0 - alpha
    n = len(adj)
    inq = bytearray(n)
    queue: deque[int] = deque()
    for s in seeds:
        if not inq[s]:
            inq[s] = 1
            queue.append(s)
    pop = queue.popleft
    push = queue.append
    pushes = 0
    touched = 0
    while queue:
        s = pop()
        inq[s] = 0
        rs = res[s]
        lim = thr[s]
        if -lim <= rs <= lim:
            continue
        est[s] += alpha * rs
        # zero before spreading: the self-loop share must stay on s
        res[s] = 0.0
        share = keep * rs * inv_p1[s]
        nbrs = adj[s]
        for t in nbrs:
            rt = res[t] + share * inv_pb[t]
            res[t] = rt
            if not inq[t]:
                lim = thr[t]
                if rt > lim or rt < -lim:
                    inq[t] = 1
                    push(t)
        pushes += 1
        touched += len(nbrs)
    return pushes, touched


def over_threshold(g: Graph, cfg: PropagationConfig, residual: np.ndarray) -> np.ndarray:
    """Ascending ids of nodes whose residual violates the push threshold."""
    limits = cfg.epsilon * np.asarray(g.degree, dtype=np.float64) ** (1.0 - cfg.beta)
    return np.flatnonzero(np.abs(residual) > limits)


def basic_propagate(
    g: Graph,
    cfg: PropagationConfig,
    state: PropagationState,
    columns: Iterable[int] | None = None,
    threads: int = 1,
) -> PushStats:
    """Push until every selected column satisfies ``|r(s)| <= eps * d(s)^(1-beta)``.

    Over-threshold nodes enter a FIFO queue in ascending id order; nodes
    that cross the threshold while the loop runs are appended as they
    appear.  Columns are independent and may run on ``threads`` workers.
    """
    if state.poisoned:
        raise PropagationError("state is poisoned by an earlier non-finite value")
    if state.node_count != g.node_count:
        raise ValueError(f"state has {state.node_count} rows, graph has {g.node_count} nodes")
    cols = list(range(state.dims)) if columns is None else list(columns)
    for c in cols:
        if not 0 <= c < state.dims:
            raise IndexError(f"column {c} out of range for d={state.dims}")
    started = time.perf_counter()
    stats = PushStats()
    if not cols:
        return stats
    selected = np.ix_(np.arange(state.node_count), cols)
    if not (np.isfinite(state.estimate[selected]).all() and np.isfinite(state.residual[selected]).all()):
        state.poisoned = True
        raise PropagationError("non-finite value in estimate or residual")

    weights = _node_weights(g.degree, cfg)
    limits = weights[2]
    compiled = _load_compiled() if push_backend() == "compiled" else None
    if compiled is not None:
        packed = g.packed()
        inv_pb, inv_p1, thr = weights
    else:
        inv_pb, inv_p1, thr = weights.tolist()

    def run(c: int) -> tuple[int, int]:
        r_col = state.residual[:, c]
        seeds = np.flatnonzero(np.abs(r_col) > limits)
        if not len(seeds):
            return 0, 0
        if compiled is not None:
            est = np.ascontiguousarray(state.estimate[:, c])
            res = np.ascontiguousarray(r_col)
            counts = compiled.push_column(
                packed.start, packed.length, packed.indices, inv_pb, inv_p1, thr,
                cfg.alpha, est, res, seeds.astype(np.int64),
            )
            counts = (int(counts[0]), int(counts[1]))
        else:
            est = state.estimate[:, c].tolist()
            res = r_col.tolist()
            counts = _push_column(g.adjacency, cfg, inv_pb, inv_p1, thr, est, res, seeds.tolist())
        state.estimate[:, c] = est
        state.residual[:, c] = res
        return counts

    if threads > 1 and len(cols) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, cols))
    else:
        results = [run(c) for c in cols]
    for pushes, touched in results:
        stats.pushes += pushes
        stats.touched_entries += touched

    if not (np.isfinite(state.estimate[selected]).all() and np.isfinite(state.residual[selected]).all()):
        state.poisoned = True
        raise PropagationError("non-finite value produced during propagation")
    stats.wall_time = time.perf_counter() - started
    return stats


def propagate_from_scratch(
    g: Graph, cfg: PropagationConfig, X, threads: int = 1
) -> tuple[PropagationState, PushStats]:
    state = new_state(g, X)
    return state, basic_propagate(g, cfg, state, threads=threads)
