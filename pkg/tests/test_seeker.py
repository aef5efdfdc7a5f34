import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from ne_lab.errors import ConnectivityError, DimensionError, NeLabError
from ne_lab.game import GameSpec, QuadraticCost, agent_partials
from ne_lab.oracle import solve_ne_quadratic, verify_ne
from ne_lab.seeker import (
    SeekerConfig,
    SeekerEngine,
    initialize,
    intra_spread,
    run,
    run_single_agent_mode,
    run_single_coalition_mode,
    step,
    tracking_residual,
)
from ne_lab.topology import CoalitionLayout, build_graph, uniform_weights

from instances import PAPER_X0, paper_instance, random_instance, random_quadratic_game, random_valid_graph, transcribed_round


def tracker_rows(state, layout):
    rows = []
    for i in range(layout.n_coalitions):
        rows.extend(state.tracker[i])
    return rows


def test_initialize_sets_trackers_to_partials():
    game, graph, weights = paper_instance()
    rng = np.random.default_rng(0)
    est0 = rng.normal(size=(10, 10))
    s = initialize(game, graph, weights, PAPER_X0, est0)
    assert s.k == 0
    np.testing.assert_array_equal(s.x, PAPER_X0)
    np.testing.assert_array_equal(s.estimate, est0)
    for a, row in enumerate(tracker_rows(s, game.layout)):
        np.testing.assert_array_equal(row, agent_partials(game, a, est0[a]))


def test_initialize_defaults_estimates_to_x0():
    game, graph, weights = paper_instance()
    s = initialize(game, graph, weights, PAPER_X0)
    np.testing.assert_array_equal(s.estimate, np.tile(PAPER_X0, (10, 1)))


def test_initialize_dimension_and_connectivity_errors():
    game, graph, weights = paper_instance()
    with pytest.raises(DimensionError):
        initialize(game, graph, weights, [0.0] * 9)
    with pytest.raises(DimensionError):
        initialize(game, graph, weights, PAPER_X0, np.zeros((10, 9)))
    layout = CoalitionLayout((2,))
    g = build_graph(layout, ["1.1 -> 1.2"])
    toy = GameSpec(layout, (QuadraticCost(np.eye(2), [0, 0]), QuadraticCost(np.eye(2), [0, 0])))
    with pytest.raises(ConnectivityError):
        initialize(toy, g, weights, [0.0, 0.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.001, 0.05, 0.3]))
def test_engine_matches_per_agent_transcription(seed, alpha):
    game, graph, weights, x0 = random_instance(seed)
    rng = np.random.default_rng(seed + 1)
    est0 = rng.normal(size=(graph.n_sum, graph.n_sum))
    s = initialize(game, graph, weights, x0, est0)
    x, est = s.x.copy(), s.estimate.copy()
    tr = [row.copy() for row in tracker_rows(s, graph.layout)]
    for _ in range(15):
        s = step(s, game, graph, weights, alpha)
        x, tr, est = transcribed_round(game, graph, weights, x, tr, est, alpha)
        scale = max(1.0, np.max(np.abs(x)))
        np.testing.assert_allclose(s.x, x, rtol=0, atol=1e-11 * scale)
        np.testing.assert_allclose(s.estimate, est, rtol=0, atol=1e-11 * scale)
        for a, row in enumerate(tracker_rows(s, graph.layout)):
            np.testing.assert_allclose(row, tr[a], rtol=1e-10, atol=1e-10 * max(1.0, np.max(np.abs(tr[a]))))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.001, 0.01, 0.1]))
def test_tracking_identity_holds_for_any_step(seed, alpha):
    game, graph, weights, x0 = random_instance(seed)
    engine = SeekerEngine(game, graph, weights)
    s = engine.initialize(x0, np.random.default_rng(seed).normal(size=(graph.n_sum, graph.n_sum)))
    for _ in range(200):
        s = engine.step(s, alpha)
        assert tracking_residual(s) <= 1e-9


def test_paper_run_converges_to_equilibrium():
    game, graph, weights = paper_instance()
    eq = solve_ne_quadratic(game)
    log = run(SeekerConfig(alpha=0.02), game, graph, weights, PAPER_X0, y_star=eq.y_star)
    assert log.converged
    x = log.x[-1]
    assert np.max(np.abs(x - eq.x_star)) <= 1e-2
    assert intra_spread(game.layout, x) <= 1e-6
    assert max(verify_ne(game, x, 1e-4).gradient_residual) <= 1e-4
    assert log.k == sorted(set(log.k))
    assert len(log.k) == log.iterations + 1
    assert set(log.errors) == {"err_x", "err_psi", "err_xi", "err_xbar"}
    assert log.errors["err_xbar"][-1] <= 1e-6


def test_runs_are_deterministic():
    game, graph, weights = paper_instance()
    cfg = SeekerConfig(alpha=0.02, max_iterations=300)
    a = run(cfg, game, graph, weights, PAPER_X0)
    b = run(cfg, game, graph, weights, PAPER_X0)
    assert np.array_equal(a.x_array(), b.x_array())
    assert a.k == b.k


def test_iteration_cap_gives_two_rows():
    game, graph, weights = paper_instance()
    log = run(SeekerConfig(alpha=0.02, max_iterations=1), game, graph, weights, PAPER_X0)
    assert log.verdict == "max_iterations"
    assert log.k == [0, 1]


def test_divergence_guard():
    game, graph, weights = paper_instance()
    log = run(SeekerConfig(alpha=10.0), game, graph, weights, PAPER_X0)
    assert log.verdict == "diverged"
    assert "iteration" in log.message
    # the offending round is not logged; the last row is the last bounded state
    assert log.k[-1] == log.iterations - 1


def test_oracle_tolerance_delays_stop():
    game, graph, weights = paper_instance()
    eq = solve_ne_quadratic(game)
    loose = run(SeekerConfig(alpha=0.02, stop_tolerance=1e-2), game, graph, weights, PAPER_X0)
    tight = run(SeekerConfig(alpha=0.02, stop_tolerance=1e-2, oracle_tolerance=1e-9), game, graph, weights, PAPER_X0, y_star=eq.y_star)
    assert tight.iterations > loose.iterations
    assert np.max(np.abs(tight.x[-1] - eq.x_star)) <= 1e-9


def test_decimation_keeps_final_row():
    game, graph, weights = paper_instance()
    log = run(SeekerConfig(alpha=0.02, max_iterations=25, decimation=10), game, graph, weights, PAPER_X0)
    assert log.k == [0, 10, 20, 25]


def test_config_validation():
    with pytest.raises(ValueError):
        SeekerConfig(alpha=0.0)
    with pytest.raises(ValueError):
        SeekerConfig(alpha="fast")
    with pytest.raises(ValueError):
        SeekerConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SeekerConfig(mode="async")


def test_record_states_keeps_consecutive_snapshots():
    game, graph, weights = paper_instance()
    log = run(SeekerConfig(alpha=0.02, max_iterations=30, record_states=True, decimation=7), game, graph, weights, PAPER_X0)
    assert [s.k for s in log.states] == list(range(31))


# --- degenerate modes -------------------------------------------------------


def singleton_instance(seed):
    rng = np.random.default_rng(seed)
    layout = CoalitionLayout((1,) * int(rng.integers(2, 5)))
    graph = random_valid_graph(rng, layout)
    game = random_quadratic_game(rng, layout)
    return game, graph, uniform_weights(graph), rng.uniform(-5, 5, layout.n_sum)


@pytest.mark.parametrize("seed", range(5))
def test_single_agent_mode_is_bit_identical(seed):
    game, graph, weights, x0 = singleton_instance(seed)
    cfg = SeekerConfig(alpha=0.05, max_iterations=400)
    general = run(cfg, game, graph, weights, x0)
    special = run_single_agent_mode(cfg, game, graph, weights, x0)
    assert np.array_equal(general.x_array(), special.x_array())
    assert general.k == special.k
    assert np.array_equal(general.final_state.estimate, special.final_state.estimate)
    assert max(special.identity_residual) <= 1e-12
    assert len(special.identity_residual) == special.iterations + 1


def test_single_agent_two_player_game_converges():
    layout = CoalitionLayout((1, 1))
    f1 = QuadraticCost([[4.0, -2.0], [-2.0, 2.0]], [0.0, 0.0])
    f2 = QuadraticCost([[0.0, 0.0], [0.0, 2.0]], [0.0, -2.0], 1.0)
    game = GameSpec(layout, (f1, f2))
    graph = build_graph(layout, ["1.1 -> 2.1", "2.1 -> 1.1"])
    log = run_single_agent_mode(SeekerConfig(alpha=0.05, stop_tolerance=1e-12), game, graph, uniform_weights(graph), [3.0, -2.0])
    assert log.converged
    np.testing.assert_allclose(log.x[-1], [0.5, 1.0], atol=1e-9)


def test_single_agent_mode_rejects_larger_coalitions():
    game, graph, weights = paper_instance()
    with pytest.raises(NeLabError):
        run_single_agent_mode(SeekerConfig(), game, graph, weights, PAPER_X0)


def separable_coalition(c):
    n = len(c)
    layout = CoalitionLayout((n,))
    costs = []
    for a in range(n):
        H = np.zeros((n, n))
        H[a, a] = 2.0
        g = np.zeros(n)
        g[a] = -2.0 * c[a]
        costs.append(QuadraticCost(H, g, c[a] ** 2))
    return GameSpec(layout, tuple(costs))


def test_single_coalition_least_squares_mean():
    c = [1.0, 4.0, -2.0]
    game = separable_coalition(c)
    graph = build_graph(game.layout, ["1.1 -> 1.2", "1.2 -> 1.3", "1.3 -> 1.1"])
    log = run_single_coalition_mode(SeekerConfig(alpha=0.05, stop_tolerance=1e-12), game, graph, uniform_weights(graph), [0.0, 0.0, 0.0])
    assert log.converged
    np.testing.assert_allclose(log.x[-1], np.mean(c), atol=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_single_coalition_matches_general_engine_and_scalar_minimizer(seed):
    rng = np.random.default_rng(100 + seed)
    layout = CoalitionLayout((4,))
    graph = random_valid_graph(rng, layout)
    game = random_quadratic_game(rng, layout)
    weights = uniform_weights(graph)
    x0 = rng.uniform(-3, 3, 4)
    cfg = SeekerConfig(alpha=0.02, stop_tolerance=1e-12)
    special = run_single_coalition_mode(cfg, game, graph, weights, x0)
    general = run(cfg, game, graph, weights, x0)
    assert np.array_equal(special.x_array(), general.x_array())
    assert special.converged

    def total(theta):
        return sum(c.value(np.full(4, theta)) for c in game.costs)

    best = minimize_scalar(total, bracket=(-100, 100), method="brent", options={"xtol": 1e-14})
    np.testing.assert_allclose(special.x[-1], best.x, atol=1e-6)


def test_single_coalition_mode_rejects_several_coalitions():
    game, graph, weights = paper_instance()
    with pytest.raises(NeLabError):
        run_single_coalition_mode(SeekerConfig(), game, graph, weights, PAPER_X0)


def test_modes_dispatch_through_run():
    game, graph, weights, x0 = singleton_instance(9)
    cfg = SeekerConfig(alpha=0.05, max_iterations=50, mode="single-agent-coalitions")
    assert run(cfg, game, graph, weights, x0).identity_residual
