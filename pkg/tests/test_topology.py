import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ne_lab.errors import ConnectivityError, ConvergenceError, GraphError, WeightError
from ne_lab.topology import (
    CoalitionLayout,
    build_graph,
    check_connectivity,
    explicit_weights,
    format_edge,
    parse_edge,
    stationary_left_vector,
    stationary_right_vector,
    uniform_weights,
    weight_violations,
)

from instances import dfs_strongly_connected, random_layout, random_valid_graph, ring_edges


def complete_edges(layout):
    n = layout.n_sum
    return [(s, r) for s in range(n) for r in range(n) if s != r]


# --- layout and indexing ----------------------------------------------------


def test_paper_layout_has_ten_agents():
    layout = CoalitionLayout((3, 4, 3))
    assert layout.n_sum == 10
    assert layout.n_coalitions == 3
    assert layout.offsets == (0, 3, 7)


def test_flat_index_is_a_bijection():
    layout = CoalitionLayout((2, 1, 4))
    seen = [layout.flat_index(i, j) for i in range(1, 4) for j in range(1, layout.sizes[i - 1] + 1)]
    assert seen == list(range(layout.n_sum))
    for a in range(layout.n_sum):
        assert layout.flat_index(*layout.agent_of(a)) == a
    assert layout.labels()[3] == "3.1"


@pytest.mark.parametrize("sizes", [(), (0, 2), (1,), (2, -1)])
def test_layout_rejects_bad_sizes(sizes):
    with pytest.raises(ValueError):
        CoalitionLayout(sizes)


def test_edge_text_round_trip():
    layout = CoalitionLayout((3, 4, 3))
    e = parse_edge(" 2.4 ->3.1", layout)
    assert e == (6, 7)
    assert format_edge(e, layout) == "2.4 -> 3.1"
    with pytest.raises(GraphError):
        parse_edge("2.5 -> 1.1", layout)
    with pytest.raises(GraphError):
        parse_edge("1-1 -> 1.2", layout)


# --- graph matrices ---------------------------------------------------------


def test_two_node_laplacian():
    g = build_graph(CoalitionLayout((2,)), ["1.1 -> 1.2", "1.2 -> 1.1"])
    assert g.laplacian.tolist() == [[1, -1], [-1, 1]]


def test_directed_ring_laplacian():
    g = build_graph(CoalitionLayout((3,)), ["1.1 -> 1.2", "1.2 -> 1.3", "1.3 -> 1.1"])
    assert np.all(g.laplacian.sum(axis=1) == 0)
    assert np.diag(g.laplacian).tolist() == [1, 1, 1]
    # receiver-major: agent 1.2 hears from 1.1
    assert g.adjacency[1, 0] and not g.adjacency[0, 1]


def test_graph_rejects_duplicates_self_loops_unknown_agents():
    layout = CoalitionLayout((2,))
    with pytest.raises(GraphError, match="duplicate"):
        build_graph(layout, ["1.1 -> 1.2", "1.1 -> 1.2"])
    with pytest.raises(GraphError, match="self-loop"):
        build_graph(layout, ["1.1 -> 1.1"])
    with pytest.raises(GraphError):
        build_graph(layout, ["1.1 -> 1.3"])


def test_graph_arrays_are_read_only():
    g = build_graph(CoalitionLayout((2,)), ["1.1 -> 1.2", "1.2 -> 1.1"])
    with pytest.raises(ValueError):
        g.laplacian[0, 0] = 5


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_laplacian_identities_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    g = random_valid_graph(rng, random_layout(rng, 4, 4))
    L = g.laplacian
    assert L.dtype.kind == "i"
    assert np.all(L @ np.ones(g.n_sum, dtype=L.dtype) == 0)
    assert np.array_equal(np.diag(L), g.in_degree)
    assert not np.any(np.diag(g.adjacency))


# --- connectivity -----------------------------------------------------------


def test_empty_coalition_subgraph_fails_naming_it():
    layout = CoalitionLayout((2, 2))
    # ring through all agents, but never 1.1 <-> 1.2 directly
    edges = ["1.1 -> 2.1", "2.1 -> 1.2", "1.2 -> 2.2", "2.2 -> 1.1", "2.1 -> 2.2", "2.2 -> 2.1"]
    report = check_connectivity(build_graph(layout, edges))
    assert not report.ok
    assert report.failures == ("G_1",)
    assert "G_1" in report.message


def test_complete_graph_passes():
    layout = CoalitionLayout((2, 3, 1))
    assert check_connectivity(build_graph(layout, complete_edges(layout))).ok


def test_directed_path_fails_naming_whole_graph():
    layout = CoalitionLayout((1, 1, 1))
    report = check_connectivity(build_graph(layout, ["1.1 -> 2.1", "2.1 -> 3.1"]))
    assert report.failures == ("G",)


def test_paper_topology_is_valid():
    layout = CoalitionLayout((3, 4, 3))
    assert check_connectivity(build_graph(layout, ring_edges(layout))).ok


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
def test_connectivity_agrees_with_dfs(n, density, seed):
    rng = np.random.default_rng(seed)
    if n < 2:
        return
    cuts = sorted(rng.choice(np.arange(1, n), size=min(n - 1, int(rng.integers(0, 3))), replace=False))
    layout = CoalitionLayout(tuple(int(s) for s in np.diff([0, *cuts, n])))
    edges = [(s, r) for s in range(n) for r in range(n) if s != r and rng.random() < density]
    g = build_graph(layout, edges)
    report = check_connectivity(g)
    expected = []
    if not dfs_strongly_connected(g.adjacency):
        expected.append("G")
    for i in range(layout.n_coalitions):
        if not dfs_strongly_connected(g.coalition_adjacency(i)):
            expected.append(f"G_{i + 1}")
    assert list(report.failures) == expected


# --- stationary vectors -----------------------------------------------------


def test_doubly_stochastic_gives_uniform_vector():
    M = np.array([[0.2, 0.5, 0.3], [0.5, 0.3, 0.2], [0.3, 0.2, 0.5]])
    np.testing.assert_allclose(stationary_left_vector(M, 6.0), [2, 2, 2], atol=1e-12)
    np.testing.assert_allclose(stationary_right_vector(M, 3.0), [1, 1, 1], atol=1e-12)


def test_two_state_chain_by_hand():
    # u' M = u' gives 0.5 u1 + 0.25 u2 = u1, so u2 = 2 u1; scale 2 -> [2/3, 4/3]
    M = np.array([[0.5, 0.5], [0.25, 0.75]])
    np.testing.assert_allclose(stationary_left_vector(M, 2.0), [2 / 3, 4 / 3], atol=1e-13)
    np.testing.assert_allclose(stationary_left_vector(M, 2.0, method="direct"), [2 / 3, 4 / 3], atol=1e-13)


def test_periodic_chain_still_converges():
    M = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(stationary_left_vector(M, 2.0), [1.0, 1.0], atol=1e-13)


def test_transpose_duality():
    rng = np.random.default_rng(3)
    M = rng.uniform(0.1, 1.0, (4, 4))
    M /= M.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(stationary_right_vector(M.T, 4.0), stationary_left_vector(M, 4.0), atol=1e-13)


def test_stationary_rejects_non_stochastic_and_reducible():
    with pytest.raises(ValueError, match="row"):
        stationary_left_vector(np.array([[0.5, 0.4], [0.5, 0.5]]))
    with pytest.raises(ValueError):
        stationary_left_vector(np.array([[1.0, 0.0], [0.5, 0.5]]))


def test_power_iteration_cap_falls_back_to_direct_solve_when_small():
    M = np.array([[0.5, 0.5], [0.25, 0.75]])
    np.testing.assert_allclose(stationary_left_vector(M, 2.0, max_iter=1), [2 / 3, 4 / 3], atol=1e-13)


def test_power_iteration_cap_raises_when_too_large_for_direct_solve():
    rng = np.random.default_rng(0)
    M = rng.uniform(0.1, 1.0, (65, 65))
    M /= M.sum(axis=1, keepdims=True)
    with pytest.raises(ConvergenceError):
        stationary_left_vector(M, 65.0, max_iter=1)


# --- weights ----------------------------------------------------------------


def test_uniform_row_with_two_in_neighbors():
    layout = CoalitionLayout((3,))
    g = build_graph(layout, ["1.2 -> 1.1", "1.3 -> 1.1", "1.1 -> 1.2", "1.2 -> 1.3"])
    w = uniform_weights(g)
    np.testing.assert_allclose(w.pull[0][0], [1 / 3, 1 / 3, 1 / 3])


def test_two_agent_uniform_weights():
    g = build_graph(CoalitionLayout((2,)), ["1.1 -> 1.2", "1.2 -> 1.1"])
    w = uniform_weights(g)
    np.testing.assert_allclose(w.pull[0], [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_allclose(w.left[0], [1, 1])


def test_directed_ring_left_vector_against_power_oracle():
    g = build_graph(CoalitionLayout((3,)), ["1.1 -> 1.2", "1.2 -> 1.3", "1.3 -> 1.1"])
    w = uniform_weights(g)
    R = w.pull[0]
    # independent oracle: plain power iteration on R' from the uniform vector
    u = np.ones(3)
    for _ in range(5000):
        u = R.T @ u
    u *= 3 / u.sum()
    np.testing.assert_allclose(w.left[0], u, atol=1e-12)
    assert np.max(np.abs(w.left[0] @ R - w.left[0])) <= 1e-12
    assert w.left[0].sum() == pytest.approx(3.0, abs=1e-12)


def test_uniform_weights_need_connectivity():
    layout = CoalitionLayout((2,))
    with pytest.raises(ConnectivityError, match="G_1"):
        uniform_weights(build_graph(layout, ["1.1 -> 1.2"]))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_uniform_weight_invariants(seed):
    rng = np.random.default_rng(seed)
    g = random_valid_graph(rng, random_layout(rng, 3, 5))
    w = uniform_weights(g)
    for i in range(g.layout.n_coalitions):
        R, C, u, v = w.pull[i], w.push[i], w.left[i], w.right[i]
        n = R.shape[0]
        support = g.coalition_adjacency(i) | np.eye(n, dtype=bool)
        assert np.all(np.abs(R.sum(axis=1) - 1) <= 1e-12)
        assert np.all(np.abs(C.sum(axis=0) - 1) <= 1e-12)
        assert np.array_equal(R > 0, support) and np.array_equal(C > 0, support)
        assert np.all(u > 0) and np.all(v > 0)
        assert np.max(np.abs(u @ R - u)) <= 1e-12 and np.max(np.abs(C @ v - v)) <= 1e-12
        assert u.sum() == pytest.approx(n, abs=1e-12) and v.sum() == pytest.approx(n, abs=1e-12)
        if n <= 64:
            np.testing.assert_allclose(stationary_left_vector(R, n, method="direct"), u, atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabeling_within_a_coalition_is_equivariant(seed):
    rng = np.random.default_rng(seed)
    layout = CoalitionLayout((int(rng.integers(2, 5)),))
    g = random_valid_graph(rng, layout)
    perm = rng.permutation(layout.n_sum)  # new label of old agent a is perm[a]
    g2 = build_graph(layout, [(int(perm[s]), int(perm[r])) for s, r in g.edges])
    w, w2 = uniform_weights(g), uniform_weights(g2)
    inv = np.argsort(perm)
    np.testing.assert_allclose(w2.pull[0], w.pull[0][np.ix_(inv, inv)], atol=1e-15)
    np.testing.assert_allclose(w2.push[0], w.push[0][np.ix_(inv, inv)], atol=1e-15)
    np.testing.assert_allclose(w2.left[0], w.left[0][inv], atol=1e-12)
    np.testing.assert_allclose(w2.right[0], w.right[0][inv], atol=1e-12)


def test_explicit_weights_validation():
    layout = CoalitionLayout((2,))
    g = build_graph(layout, ["1.1 -> 1.2", "1.2 -> 1.1"])
    good_R = np.array([[0.3, 0.7], [0.6, 0.4]])
    good_C = np.array([[0.2, 0.5], [0.8, 0.5]])
    w = explicit_weights(g, [good_R], [good_C])
    assert np.max(np.abs(w.left[0] @ good_R - w.left[0])) <= 1e-12
    bad_R = np.array([[0.3, 0.6], [0.6, 0.4]])
    problems = weight_violations(g, [bad_R], [good_C])
    assert any("row 1 of R_1 sums to 0.9" in p and "row-stochastic" in p for p in problems)
    with pytest.raises(WeightError, match="row-stochastic"):
        explicit_weights(g, [bad_R], [good_C])
    bad_C = good_C.copy()
    bad_C[1, 0] = 0.7
    assert any("column 1 of C_1" in p for p in weight_violations(g, [good_R], [bad_C]))


def test_explicit_weights_support_must_match_edges():
    layout = CoalitionLayout((3,))
    g = build_graph(layout, ["1.1 -> 1.2", "1.2 -> 1.3", "1.3 -> 1.1"])
    R = np.full((3, 3), 1 / 3)
    C = np.full((3, 3), 1 / 3)
    problems = weight_violations(g, [R], [C])
    assert any("not an intra-coalition edge" in p for p in problems)
