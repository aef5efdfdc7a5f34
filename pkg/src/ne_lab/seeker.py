"""Synchronous simulation of the distributed NE seeking iteration.

Each agent ``ij`` keeps three things:

* its state ``x_ij``;
* a gradient tracker, one entry per member of its coalition, whose coalition
  average follows the average of the members' own-coalition partials;
* an estimate of the whole joint state, driven by a leader-following
  consensus in which an agent is anchored to the true state of each of its
  in-neighbors.

One round is

    x_i      <- R_i x_i - (alpha / n_i) * (row sums of tracker_i)
    estimate <- estimate - diag(1/(d + A)) * ((L (x) I + A_d)(estimate - 1 (x) x))
    tracker_i <- C_i tracker_i + P_i(estimate_new) - P_i(estimate_old)

with self-weights included in ``R_i`` and ``C_i``. The tracker update consumes
the estimate of the *same* round, so the order above is fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, DivergenceError, NeLabError
from .game import GameSpec, expand
from .topology import DirectedGameGraph, IntraCoalitionWeights, require_connectivity

DIVERGENCE_BOUND = 1e12
MAX_ROWS = 100_000

MODES = ("general", "single-agent-coalitions", "single-coalition")


@dataclass(frozen=True)
class SwarmState:
    """All agent variables after ``k`` rounds.

    ``tracker[i][j, l]`` is agent ``ij``'s tracker entry for coalition member ``il``;
    ``estimate[a]`` is agent ``a``'s estimate of the joint state. ``partials``
    caches the own-coalition partials evaluated at ``estimate`` (same layout as
    ``tracker``) so a round evaluates gradients once.
    """

    k: int
    x: np.ndarray
    tracker: tuple[np.ndarray, ...]
    estimate: np.ndarray
    partials: tuple[np.ndarray, ...] = field(repr=False)


@dataclass(frozen=True)
class SeekerConfig:
    alpha: float | str = 0.02
    max_iterations: int = 100_000
    stop_tolerance: float = 1e-8
    oracle_tolerance: float | None = None
    mode: str = "general"
    record_states: bool = False
    decimation: int = 1

    def __post_init__(self):
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ValueError(f"alpha must be a positive number or 'auto', got {self.alpha!r}")
        elif not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.stop_tolerance <= 0:
            raise ValueError("stop_tolerance must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.decimation < 1:
            raise ValueError("decimation must be at least 1")


@dataclass
class TrajectoryLog:
    """Recorded run. ``rows`` of ``k``/``x``/error norms are strictly increasing in ``k``."""

    alpha: float
    k: list[int] = field(default_factory=list)
    x: list[np.ndarray] = field(default_factory=list)
    errors: dict[str, list[float]] = field(default_factory=dict)
    V: list[float] = field(default_factory=list)
    states: list[SwarmState] = field(default_factory=list)
    verdict: str = "max_iterations"  # converged | max_iterations | diverged
    iterations: int = 0
    message: str = ""
    final_state: SwarmState | None = None
    identity_residual: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.verdict == "converged"

    def x_array(self) -> np.ndarray:
        return np.array(self.x)


def intra_spread(layout, x: np.ndarray) -> float:
    """Largest disagreement inside any coalition."""
    return max(float(np.ptp(x[layout.block(i)])) for i in range(layout.n_coalitions))


class SeekerEngine:
    """Precomputed operators for one (game, graph, weights) triple."""

    def __init__(self, game: GameSpec, graph: DirectedGameGraph, weights: IntraCoalitionWeights):
        if game.layout != graph.layout:
            raise DimensionError("game and graph layouts differ")
        require_connectivity(graph)
        self.game = game
        self.graph = graph
        self.weights = weights
        self.layout = graph.layout
        self.blocks = [self.layout.block(i) for i in range(self.layout.n_coalitions)]
        self.laplacian = graph.laplacian.astype(float)
        self.anchor = graph.adjacency.astype(float)
        self.gain = 1.0 / (graph.in_degree[:, None] + self.anchor)

    def estimate_update(self, estimate: np.ndarray, x: np.ndarray) -> np.ndarray:
        D = estimate - x[None, :]
        return estimate - self.gain * (self.laplacian @ D + self.anchor * D)

    def initialize(self, x0: np.ndarray, estimate0: np.ndarray | None = None) -> SwarmState:
        n = self.layout.n_sum
        x0 = np.array(x0, dtype=float)
        if x0.shape != (n,):
            raise DimensionError(f"x0 must have length {n}, got shape {x0.shape}")
        est = np.tile(x0, (n, 1)) if estimate0 is None else np.array(estimate0, dtype=float)
        if est.shape != (n, n):
            raise DimensionError(f"initial estimates must be {n}x{n}, got shape {est.shape}")
        partials = tuple(self.game.coalition_partials(est))
        tracker = tuple(p.copy() for p in partials)
        return SwarmState(0, x0, tracker, est, partials)

    def step(self, state: SwarmState, alpha: float) -> SwarmState:
        x, est = state.x, state.estimate
        x_new = np.empty_like(x)
        for i, b in enumerate(self.blocks):
            n_i = b.stop - b.start
            x_new[b] = self.weights.pull[i] @ x[b] - (alpha / n_i) * state.tracker[i].sum(axis=1)
        est_new = self.estimate_update(est, x)
        partials_new = tuple(self.game.coalition_partials(est_new))
        tracker_new = tuple(
            self.weights.push[i] @ state.tracker[i] + partials_new[i] - state.partials[i]
            for i in range(len(self.blocks))
        )
        new = SwarmState(state.k + 1, x_new, tracker_new, est_new, partials_new)
        _guard(new)
        return new


def _guard(state: SwarmState) -> None:
    finite = np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.estimate))
    finite = finite and all(np.all(np.isfinite(t)) for t in state.tracker)
    if not finite:
        raise DivergenceError(f"non-finite values at iteration {state.k}", state.k)
    big = float(np.max(np.abs(state.x)))
    if big > DIVERGENCE_BOUND:
        raise DivergenceError(f"|x| reached {big:.3g} at iteration {state.k}", state.k)


def initialize(
    game: GameSpec,
    graph: DirectedGameGraph,
    weights: IntraCoalitionWeights,
    x0: Sequence[float],
    estimate0: np.ndarray | None = None,
) -> SwarmState:
    """Initial state; trackers start at the partials of each agent's initial estimate.

    ``estimate0=None`` gives every agent the true ``x0`` as its estimate.
    """
    return SeekerEngine(game, graph, weights).initialize(np.asarray(x0), estimate0)


def step(
    state: SwarmState,
    game: GameSpec,
    graph: DirectedGameGraph,
    weights: IntraCoalitionWeights,
    alpha: float,
) -> SwarmState:
    return SeekerEngine(game, graph, weights).step(state, alpha)


def tracking_residual(state: SwarmState) -> float:
    """Relative gap between the coalition-averaged trackers and averaged partials.

    The push weights are column-stochastic, so this is zero up to rounding for
    every round regardless of step size.
    """
    worst = 0.0
    for t, p in zip(state.tracker, state.partials):
        gap = np.max(np.abs(t.mean(axis=0) - p.mean(axis=0)))
        scale = max(1.0, float(np.max(np.abs(t))), float(np.max(np.abs(p))))
        worst = max(worst, float(gap) / scale)
    return worst


# --- run loop ---------------------------------------------------------------


class _Recorder:
    def __init__(self, log, layout, weights, y_star, certificates, record_states, decimation):
        self.log = log
        self.layout = layout
        self.weights = weights
        self.y_star = None if y_star is None else np.asarray(y_star, dtype=float)
        self.certificates = certificates
        self.record_states = record_states
        self.decimation = decimation
        if self.y_star is not None:
            for key in ("err_x", "err_psi", "err_xi", "err_xbar"):
                log.errors[key] = []

    def __call__(self, state: SwarmState, force: bool = False) -> None:
        log = self.log
        # Full snapshots ignore decimation so the audit sees consecutive rounds.
        if self.record_states and not (log.states and log.states[-1].k == state.k):
            log.states.append(state)
        if not force and state.k % self.decimation:
            return
        if log.k and log.k[-1] == state.k:
            return
        log.k.append(state.k)
        log.x.append(state.x.copy())
        if self.y_star is not None:
            from .analysis import compute_errors, lyapunov_value

            e = compute_errors(state, self.weights, self.y_star)
            log.errors["err_x"].append(e.consensus_norm)
            log.errors["err_psi"].append(e.tracker_norm)
            log.errors["err_xi"].append(e.estimate_norm)
            log.errors["err_xbar"].append(e.average_norm)
            if self.certificates is not None:
                log.V.append(lyapunov_value(e, self.certificates)["total"])
        if len(log.k) > MAX_ROWS:
            self._thin()

    def _thin(self) -> None:
        # Keep rows on the doubled stride; the newest row always survives.
        self.decimation *= 2
        log = self.log
        keep = [r for r, k in enumerate(log.k) if k % self.decimation == 0 or r == len(log.k) - 1]
        log.k = [log.k[r] for r in keep]
        log.x = [log.x[r] for r in keep]
        for key, col in log.errors.items():
            log.errors[key] = [col[r] for r in keep]
        if log.V:
            log.V = [log.V[r] for r in keep]


def _resolve_alpha(config, game, graph, weights, certificates):
    if config.alpha == "auto":
        from .analysis import safe_step_size

        alpha, certs = safe_step_size(game, graph, weights)
        return alpha, certs if certificates is None else certificates.with_alpha(alpha)
    alpha = float(config.alpha)
    if certificates is not None and certificates.alpha != alpha:
        certificates = certificates.with_alpha(alpha)
    return alpha, certificates


def _loop(config, layout, weights, state, alpha, advance, y_star, certificates, after_step=None):
    log = TrajectoryLog(alpha=alpha)
    record = _Recorder(log, layout, weights, y_star, certificates, config.record_states, config.decimation)
    x_star = None if y_star is None else expand(layout, y_star)
    record(state, force=True)
    if after_step is not None:
        after_step(log, state)
    tol = config.stop_tolerance
    try:
        for _ in range(config.max_iterations):
            new = advance(state)
            if after_step is not None:
                after_step(log, new)
            moved = float(np.max(np.abs(new.x - state.x)))
            state = new
            done = moved <= tol * alpha and intra_spread(layout, state.x) <= tol
            if done and config.oracle_tolerance is not None and x_star is not None:
                done = float(np.max(np.abs(state.x - x_star))) <= config.oracle_tolerance
            if done:
                log.verdict = "converged"
                break
            record(state)
        else:
            log.verdict = "max_iterations"
            log.message = f"stopping rule not met within {config.max_iterations} iterations"
    except DivergenceError as exc:
        log.verdict = "diverged"
        log.message = str(exc)
        log.iterations = exc.iteration
        log.final_state = state
        record(state, force=True)
        return log
    record(state, force=True)
    log.iterations = state.k
    log.final_state = state
    if log.verdict == "converged":
        log.message = f"converged after {state.k} iterations"
    return log


def run(
    config: SeekerConfig,
    game: GameSpec,
    graph: DirectedGameGraph,
    weights: IntraCoalitionWeights,
    x0: Sequence[float],
    estimate0: np.ndarray | None = None,
    *,
    y_star: Sequence[float] | None = None,
    certificates=None,
) -> TrajectoryLog:
    """Iterate until the stopping rule holds or ``max_iterations`` rounds are done.

    The run stops when ``|x(k) - x(k-1)|_inf <= stop_tolerance * alpha`` and every
    coalition's spread is at most ``stop_tolerance`` (and, if both
    ``oracle_tolerance`` and ``y_star`` are given, ``x`` is that close to the
    equilibrium). A divergent run returns with ``verdict == "diverged"``.

    With ``y_star`` the four error norms are logged per recorded row, and with
    ``certificates`` (from :func:`ne_lab.analysis.safe_step_size`) also the
    Lyapunov value.
    """
    if config.mode == "single-agent-coalitions":
        return run_single_agent_mode(config, game, graph, weights, x0, estimate0, y_star=y_star, certificates=certificates)
    if config.mode == "single-coalition":
        return run_single_coalition_mode(config, game, graph, weights, x0, estimate0, y_star=y_star, certificates=certificates)
    engine = SeekerEngine(game, graph, weights)
    alpha, certificates = _resolve_alpha(config, game, graph, weights, certificates)
    state = engine.initialize(np.asarray(x0), estimate0)
    return _loop(config, graph.layout, weights, state, alpha, lambda s: engine.step(s, alpha), y_star, certificates)


def run_single_agent_mode(
    config: SeekerConfig,
    game: GameSpec,
    graph: DirectedGameGraph,
    weights: IntraCoalitionWeights,
    x0: Sequence[float],
    estimate0: np.ndarray | None = None,
    *,
    y_star: Sequence[float] | None = None,
    certificates=None,
) -> TrajectoryLog:
    """Every coalition is a single agent: classic networked NE seeking.

    Runs the scalar laws ``x_i <- x_i - alpha * t_i`` and
    ``t_i <- t_i + d_i(estimate_new) - d_i(estimate_old)`` and records, every
    round, how far ``t_i`` is from the own partial at the current estimate
    (``log.identity_residual``, relative to ``max(1, |partial|)``).
    """
    layout = graph.layout
    if any(n != 1 for n in layout.sizes):
        raise NeLabError(f"single-agent mode needs every coalition of size 1, got {list(layout.sizes)}")
    engine = SeekerEngine(game, graph, weights)
    alpha, certificates = _resolve_alpha(config, game, graph, weights, certificates)
    state = engine.initialize(np.asarray(x0), estimate0)

    def own(est):
        return np.diagonal(game.gradients(est)).copy()

    def advance(s: SwarmState) -> SwarmState:
        t = np.array([t[0, 0] for t in s.tracker])
        d_old = np.array([p[0, 0] for p in s.partials])
        x_new = s.x - alpha * t
        est_new = engine.estimate_update(s.estimate, s.x)
        d_new = own(est_new)
        t_new = t + d_new - d_old
        new = SwarmState(
            s.k + 1,
            x_new,
            tuple(v.reshape(1, 1) for v in t_new),
            est_new,
            tuple(v.reshape(1, 1) for v in d_new),
        )
        _guard(new)
        return new

    def check_identity(log, s):
        t = np.array([t[0, 0] for t in s.tracker])
        d = own(s.estimate)
        log.identity_residual.append(float(np.max(np.abs(t - d) / np.maximum(1.0, np.abs(d)))))

    return _loop(config, layout, weights, state, alpha, advance, y_star, certificates, check_identity)


def run_single_coalition_mode(
    config: SeekerConfig,
    game: GameSpec,
    graph: DirectedGameGraph,
    weights: IntraCoalitionWeights,
    x0: Sequence[float],
    estimate0: np.ndarray | None = None,
    *,
    y_star: Sequence[float] | None = None,
    certificates=None,
) -> TrajectoryLog:
    """One coalition: consensus-constrained distributed minimization of the summed cost."""
    layout = graph.layout
    if layout.n_coalitions != 1:
        raise NeLabError(f"single-coalition mode needs exactly one coalition, got {layout.n_coalitions}")
    engine = SeekerEngine(game, graph, weights)
    alpha, certificates = _resolve_alpha(config, game, graph, weights, certificates)
    state = engine.initialize(np.asarray(x0), estimate0)
    R, C = weights.pull[0], weights.push[0]
    n = layout.n_sum

    def advance(s: SwarmState) -> SwarmState:
        T, P_old = s.tracker[0], s.partials[0]
        x_new = R @ s.x - (alpha / n) * T.sum(axis=1)
        est_new = engine.estimate_update(s.estimate, s.x)
        P_new = game.gradients(est_new)
        new = SwarmState(s.k + 1, x_new, (C @ T + P_new - P_old,), est_new, (P_new,))
        _guard(new)
        return new

    return _loop(config, layout, weights, state, alpha, advance, y_star, certificates)
