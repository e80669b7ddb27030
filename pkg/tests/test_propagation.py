import importlib.util
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import er_graph, path3
from ignn.graph import Graph, graph_from_edges
from ignn.oracle import check_error_bound, check_invariant, exact_propagate, invariant_tolerance
from ignn.propagation import (
    PropagationConfig,
    PropagationError,
    _node_weights,
    _push_column,
    basic_propagate,
    embedding,
    new_state,
    propagate_from_scratch,
    residual_threshold,
)


@pytest.mark.parametrize(
    "eps, beta, d, expected",
    [(0.1, 1.0, 7, 0.1), (0.1, 0.0, 4, 0.4), (0.01, 0.5, 4, 0.02)],
)
def test_residual_threshold(eps, beta, d, expected):
    assert residual_threshold(PropagationConfig(0.2, beta, eps), d) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize(
    "kw",
    [
        dict(alpha=0.0, beta=0.5, epsilon=1e-3),
        dict(alpha=1.0, beta=0.5, epsilon=1e-3),
        dict(alpha=0.2, beta=-0.1, epsilon=1e-3),
        dict(alpha=0.2, beta=1.1, epsilon=1e-3),
        dict(alpha=0.2, beta=0.5, epsilon=0.0),
    ],
)
def test_config_ranges(kw):
    with pytest.raises(ValueError):
        PropagationConfig(**kw)


def test_new_state_zero_signal_is_noop():
    g = path3()
    cfg = PropagationConfig(0.2, 0.5, 1e-9)
    state = new_state(g, np.zeros((3, 2)))
    assert not state.residual.any()
    assert basic_propagate(g, cfg, state).pushes == 0
    assert not state.estimate.any()


def test_new_state_unit_vector():
    state = new_state(path3(), np.array([1.0, 0.0, 0.0]))
    assert state.residual[:, 0].tolist() == [1.0, 0.0, 0.0]
    assert not state.estimate.any()


def test_new_state_row_mismatch():
    with pytest.raises(ValueError):
        new_state(path3(), np.zeros((4, 1)))


def test_single_node_converges_to_signal():
    g = Graph(1)
    cfg = PropagationConfig(0.5, 0.5, 1e-9)
    state = new_state(g, np.array([1.0]))
    stats = basic_propagate(g, cfg, state)
    assert stats.pushes > 0
    assert abs(state.estimate[0, 0] - 1.0) <= 1e-9
    np.testing.assert_array_equal(embedding(state), state.estimate)


def test_large_epsilon_no_pushes():
    g = path3()
    cfg = PropagationConfig(0.2, 0.5, 10.0)
    X = np.array([[1.0], [-0.5], [0.25]])
    state = new_state(g, X)
    before = state.residual.copy()
    assert basic_propagate(g, cfg, state).pushes == 0
    np.testing.assert_array_equal(state.residual, before)
    assert not state.estimate.any()


def test_path3_bound_against_oracle():
    g = path3()
    cfg = PropagationConfig(0.2, 0.5, 1e-7)
    state = new_state(g, np.array([1.0, 0.0, 0.0]))
    basic_propagate(g, cfg, state)
    pi = exact_propagate(g, cfg, np.array([1.0, 0.0, 0.0]))
    limits = 1e-7 * np.asarray(g.degree, dtype=float) ** 0.5
    assert (np.abs(state.estimate[:, 0] - pi) <= limits).all()


def test_embedding_is_read_only():
    state = new_state(path3(), np.ones((3, 1)))
    Z = embedding(state)
    assert not Z.any()
    with pytest.raises(ValueError):
        Z[0, 0] = 1.0


def test_exit_condition_strict_threshold():
    g = er_graph(50, 0.1, random.Random(1))
    cfg = PropagationConfig(0.2, 0.5, 1e-4)
    state, _ = propagate_from_scratch(g, cfg, np.random.default_rng(1).uniform(-1, 1, (50, 3)))
    limits = cfg.epsilon * np.asarray(g.degree, dtype=float) ** (1 - cfg.beta)
    assert (np.abs(state.residual) <= limits[:, None]).all()


def test_push_step_shares():
    # one push on P3 from node 1 (degree 3): neighbor t gets (1-a) r / (d(t)^b d(1)^(1-b))
    g = path3()
    est = [0.0, 0.0, 0.0]
    res = [0.0, 1.0, 0.0]
    # epsilon chosen so that only the first push fires
    cfg_once = PropagationConfig(0.2, 0.3, 0.3)
    inv_pb, inv_p1, thr = _node_weights(g.degree, cfg_once).tolist()
    pushes, touched = _push_column(g.adjacency, cfg_once, inv_pb, inv_p1, thr, est, res, [1])
    assert pushes == 1 and touched == 3
    assert est[1] == pytest.approx(0.2)
    for t in range(3):
        want = 0.8 / (g.degree[t] ** 0.3 * 3**0.7)
        assert res[t] == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("beta", [0.0, 0.25, 0.5, 1.0])
def test_bound_and_invariant_random(beta):
    rng = random.Random(int(beta * 100))
    for trial in range(4):
        g = er_graph(rng.randint(10, 80), 0.1, rng)
        cfg = PropagationConfig(rng.choice([0.1, 0.2, 0.5]), beta, rng.choice([1e-5, 1e-7]))
        X = np.random.default_rng(trial).uniform(-1, 1, (g.node_count, 2))
        state, _ = propagate_from_scratch(g, cfg, X)
        assert check_invariant(g, cfg, state) <= invariant_tolerance(state)
        assert check_error_bound(g, cfg, state).max_violation <= 1e-12


def test_beta0_mass_conservation():
    g = er_graph(60, 0.1, random.Random(3))
    cfg = PropagationConfig(0.15, 0.0, 1e-6)
    X = np.random.default_rng(3).uniform(0, 1, (60, 1))
    state, _ = propagate_from_scratch(g, cfg, X)
    total = state.estimate.sum() + state.residual.sum()
    assert total == pytest.approx(X.sum(), abs=1e-9 * np.abs(X).sum())


def test_column_subset_leaves_others():
    g = er_graph(30, 0.2, random.Random(4))
    cfg = PropagationConfig(0.2, 0.5, 1e-6)
    X = np.random.default_rng(4).uniform(-1, 1, (30, 3))
    state = new_state(g, X)
    basic_propagate(g, cfg, state, columns=[1])
    assert not state.estimate[:, [0, 2]].any()
    assert state.estimate[:, 1].any()


def test_threads_give_identical_results():
    g = er_graph(80, 0.1, random.Random(5))
    cfg = PropagationConfig(0.2, 0.5, 1e-6)
    X = np.random.default_rng(5).uniform(-1, 1, (80, 4))
    one, s1 = propagate_from_scratch(g, cfg, X, threads=1)
    many, s4 = propagate_from_scratch(g, cfg, X, threads=4)
    np.testing.assert_array_equal(one.estimate, many.estimate)
    np.testing.assert_array_equal(one.residual, many.residual)
    assert s1.pushes == s4.pushes


def test_non_finite_poisons_state():
    g = path3()
    cfg = PropagationConfig(0.2, 0.5, 1e-6)
    state = new_state(g, np.array([1.0, np.nan, 0.0]))
    with pytest.raises(PropagationError):
        basic_propagate(g, cfg, state)
    assert state.poisoned
    with pytest.raises(PropagationError):
        basic_propagate(g, cfg, state)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 25),
    seed=st.integers(0, 2**32 - 1),
    alpha=st.sampled_from([0.1, 0.3, 0.7]),
    beta=st.sampled_from([0.0, 0.5, 1.0]),
)
def test_invariant_preserved_property(n, seed, alpha, beta):
    rng = random.Random(seed)
    g = er_graph(n, 0.3, rng)
    cfg = PropagationConfig(alpha, beta, 1e-6)
    X = np.random.default_rng(seed).normal(size=(n, 1))
    state, stats = propagate_from_scratch(g, cfg, X)
    assert stats.pushes < 10**7
    assert check_invariant(g, cfg, state) <= invariant_tolerance(state)
    assert check_error_bound(g, cfg, state).max_violation <= 1e-12


def test_triangle_graph_star_fixture():
    g = graph_from_edges(4, [(0, 1), (0, 2), (0, 3)])
    cfg = PropagationConfig(0.1, 1.0, 1e-8)
    state, _ = propagate_from_scratch(g, cfg, np.eye(4))
    assert check_error_bound(g, cfg, state).max_violation <= 1e-12


# ---- push backends ---------------------------------------------------------


needs_numba = pytest.mark.skipif(
    importlib.util.find_spec("numba") is None, reason="numba not installed"
)


@pytest.fixture
def backend():
    import ignn.propagation as prop

    saved = prop._backend
    yield prop.set_push_backend
    prop._backend = saved


def test_backend_validation(backend):
    with pytest.raises(ValueError):
        backend("gpu")


def test_pure_python_env_override(backend, monkeypatch):
    import ignn.propagation as prop

    backend("auto")
    monkeypatch.setenv("IGNN_PURE_PYTHON", "1")
    assert prop.push_backend() == "python"


@needs_numba
@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0])
def test_backends_bit_identical(backend, beta):
    from ignn.instant_update import apply_events

    from conftest import random_events

    rng = random.Random(int(beta * 10) + 7)
    g = er_graph(120, 0.08, rng)
    events = random_events(g, 80, rng)
    X = np.random.default_rng(7).uniform(-1, 1, (120, 3))
    cfg = PropagationConfig(0.15, beta, 1e-8)
    results = {}
    for name in ("python", "compiled"):
        backend(name)
        gg = g.copy()
        state, init = propagate_from_scratch(gg, cfg, X, threads=2)
        rep = apply_events(gg, state, cfg, events)
        results[name] = (state.estimate.tobytes(), state.residual.tobytes(), init.pushes,
                         init.touched_entries, rep.push_stats.pushes)
    assert results["python"] == results["compiled"]
