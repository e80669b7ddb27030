"""Dense ground truth for propagation results.

Everything here works on explicit ``n x n`` matrices and reads the engine
state only through its public arrays.  The linear solver is a plain
Gaussian elimination so that the check does not share code with the
library paths under test.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .propagation import PropagationConfig, PropagationState, as_signal_matrix

MAX_ORACLE_NODES = 5000


class OracleInfeasible(RuntimeError):
    pass


def _guard(g: Graph) -> None:
    if g.node_count > MAX_ORACLE_NODES:
        raise OracleInfeasible(
            f"dense oracle limited to {MAX_ORACLE_NODES} nodes, graph has {g.node_count}"
        )


def propagation_matrix(g: Graph, beta: float) -> np.ndarray:
    """Dense ``P = D^-beta A D^(beta-1)`` with self-loops on the diagonal."""
    _guard(g)
    n = g.node_count
    A = np.zeros((n, n))
    for s, adj in enumerate(g.adjacency):
        A[s, adj] = 1.0
    d = np.asarray(g.degree, dtype=np.float64)
    return (d ** -beta)[:, None] * A * (d ** (beta - 1.0))[None, :]


def gauss_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` by Gaussian elimination with partial pivoting."""
    M = np.asarray(A, dtype=np.float64)
    R = np.asarray(B, dtype=np.float64)
    vector = R.ndim == 1
    if vector:
        R = R[:, None]
    n = M.shape[0]
    if M.shape != (n, n) or R.shape[0] != n:
        raise ValueError(f"shape mismatch: A {M.shape}, B {R.shape}")
    # eliminate on the augmented matrix [A | B]
    W = np.concatenate([M, R], axis=1)
    for k in range(n):
        p = k + int(np.abs(W[k:, k]).argmax())
        pivot = W[p, k]
        if pivot == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        if p != k:
            W[[k, p]] = W[[p, k]]
        below = W[k + 1 :]
        below[:, k:] -= (below[:, k] / pivot)[:, None] * W[k, k:]
    U, Y = W[:, :n], W[:, n:]
    X = np.empty_like(Y)
    for k in range(n - 1, -1, -1):
        X[k] = (Y[k] - U[k, k + 1 :] @ X[k + 1 :]) / U[k, k]
    return X[:, 0] if vector else X


def exact_propagate(g: Graph, cfg: PropagationConfig, x) -> np.ndarray:
    """Exact ``pi`` from ``(I - (1-alpha) P) pi = alpha x``.

    ``x`` may be a vector or an ``n x d`` matrix; the result has the same shape.
    """
    _guard(g)
    xv = np.asarray(x, dtype=np.float64)
    if xv.shape[0] != g.node_count:
        raise ValueError(f"signal has {xv.shape[0]} rows, graph has {g.node_count} nodes")
    P = propagation_matrix(g, cfg.beta)
    system = np.eye(g.node_count) - (1.0 - cfg.alpha) * P
    return gauss_solve(system, cfg.alpha * xv)


def series_propagate(g: Graph, cfg: PropagationConfig, x, tail: float = 1e-14) -> np.ndarray:
    """Truncated ``sum_l alpha (1-alpha)^l P^l x``, stopping once ``(1-alpha)^(l+1) < tail``."""
    _guard(g)
    P = propagation_matrix(g, cfg.beta)
    term = cfg.alpha * np.asarray(x, dtype=np.float64)
    total = term.copy()
    weight = 1.0
    while True:
        weight *= 1.0 - cfg.alpha
        if weight < tail:
            return total
        term = (1.0 - cfg.alpha) * (P @ term)
        total += term


def exact_ppr(g: Graph, alpha: float, s: int) -> np.ndarray:
    """PPR vector from source ``s`` (column-stochastic walk, beta = 0)."""
    _guard(g)
    e = np.zeros(g.node_count)
    e[s] = 1.0
    return exact_propagate(g, PropagationConfig(alpha, 0.0, 1.0), e)


@dataclass
class BoundReport:
    max_violation: float
    worst_node: int
    worst_column: int

    @property
    def ok(self) -> bool:
        return self.max_violation <= 0.0


def _columns(state: PropagationState, column: int | None) -> list[int]:
    return list(range(state.dims)) if column is None else [column]


def check_error_bound(
    g: Graph,
    cfg: PropagationConfig,
    state: PropagationState,
    column: int | None = None,
    exact: np.ndarray | None = None,
) -> BoundReport:
    """Worst ``|est(s) - pi(s)| - eps * d(s)^(1-beta)`` over nodes (and columns).

    Non-positive means the bound holds.  ``exact`` may carry a precomputed
    oracle solution for the full ``n x d`` signal.
    """
    cols = _columns(state, column)
    if exact is None:
        exact = exact_propagate(g, cfg, state.signal[:, cols])
    else:
        exact = as_signal_matrix(exact)[:, cols]
    limits = cfg.epsilon * np.asarray(g.degree, dtype=np.float64) ** (1.0 - cfg.beta)
    gap = np.abs(state.estimate[:, cols] - exact) - limits[:, None]
    node, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
    return BoundReport(float(gap[node, j]), int(node), cols[j])


def invariant_residuals(g: Graph, cfg: PropagationConfig, state: PropagationState) -> np.ndarray:
    """Per-entry ``est + alpha r - alpha x - (1-alpha) P est`` as an ``n x d`` matrix."""
    P = propagation_matrix(g, cfg.beta)
    a = cfg.alpha
    return state.estimate + a * state.residual - a * state.signal - (1.0 - a) * (P @ state.estimate)


def check_invariant(
    g: Graph, cfg: PropagationConfig, state: PropagationState, column: int | None = None
) -> float:
    """Infinity norm of the estimate/residual identity residual."""
    cols = _columns(state, column)
    gap = invariant_residuals(g, cfg, state)[:, cols]
    return float(np.max(np.abs(gap))) if gap.size else 0.0


def invariant_tolerance(state: PropagationState, rel: float = 1e-9) -> float:
    """``rel * (1 + ||x||_inf)``."""
    peak = float(np.max(np.abs(state.signal))) if state.signal.size else 0.0
    return rel * (1.0 + peak)
