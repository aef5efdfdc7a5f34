"""Directed communication graphs partitioned into coalitions.

Agents are addressed either by a ``(coalition, agent)`` pair, both 1-based as
in the edge-list text form ``"i.j -> p.q"``, or by a 0-based flat index that
enumerates coalition 1 first, then coalition 2, and so on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConnectivityError, ConvergenceError, GraphError, WeightError

STOCHASTIC_TOL = 1e-12
POWER_TOL = 1e-14
POWER_MAX_ITER = 1_000_000
DIRECT_SOLVE_MAX_N = 64

_EDGE_RE = re.compile(r"^\s*(\d+)\.(\d+)\s*->\s*(\d+)\.(\d+)\s*$")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CoalitionLayout:
    """Number of agents in each coalition."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 1:
            raise GraphError("layout needs at least one coalition")
        if any(n < 1 for n in sizes):
            raise GraphError(f"coalition sizes must be positive, got {list(sizes)}")
        if sum(sizes) < 2:
            raise GraphError("at least two agents are required (every agent needs an in-neighbor)")

    @property
    def n_coalitions(self) -> int:
        return len(self.sizes)

    @property
    def n_sum(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for n in self.sizes:
            out.append(acc)
            acc += n
        return tuple(out)

    def block(self, i: int) -> slice:
        """Flat-index slice of coalition ``i`` (0-based)."""
        start = self.offsets[i]
        return slice(start, start + self.sizes[i])

    def flat_index(self, i: int, j: int) -> int:
        """0-based flat index of agent ``j`` of coalition ``i`` (both 1-based)."""
        if not 1 <= i <= self.n_coalitions:
            raise GraphError(f"unknown coalition {i}")
        if not 1 <= j <= self.sizes[i - 1]:
            raise GraphError(f"unknown agent {i}.{j}")
        return self.offsets[i - 1] + j - 1

    def agent_of(self, flat: int) -> tuple[int, int]:
        """Inverse of :meth:`flat_index`."""
        if not 0 <= flat < self.n_sum:
            raise GraphError(f"flat index {flat} out of range")
        for i, (start, n) in enumerate(zip(self.offsets, self.sizes)):
            if flat < start + n:
                return i + 1, flat - start + 1
        raise AssertionError("unreachable")

    def coalition_of(self, flat: int) -> int:
        """0-based coalition id of a flat agent index."""
        return self.agent_of(flat)[0] - 1

    def labels(self) -> list[str]:
        return [f"{i}.{j}" for i, n in enumerate(self.sizes, 1) for j in range(1, n + 1)]

    def membership(self) -> np.ndarray:
        """Coalition id (0-based) of each flat index."""
        return np.repeat(np.arange(self.n_coalitions), self.sizes)


def parse_edge(text: str, layout: CoalitionLayout) -> tuple[int, int]:
    """Parse ``"i.j -> p.q"`` into a (sender, receiver) pair of flat indices."""
    m = _EDGE_RE.match(text)
    if m is None:
        raise GraphError(f"malformed edge {text!r}, expected 'i.j -> p.q'")
    i, j, p, q = (int(g) for g in m.groups())
    return layout.flat_index(i, j), layout.flat_index(p, q)


def format_edge(edge: tuple[int, int], layout: CoalitionLayout) -> str:
    (i, j), (p, q) = layout.agent_of(edge[0]), layout.agent_of(edge[1])
    return f"{i}.{j} -> {p}.{q}"


@dataclass(frozen=True)
class DirectedGameGraph:
    """Directed graph over all agents with derived matrices.

    ``adjacency[r, s] == 1`` iff agent ``s`` sends to agent ``r`` (row = receiver),
    so row sums are in-degrees and ``laplacian = diag(in_degree) - adjacency``.
    """

    layout: CoalitionLayout
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)
    laplacian: np.ndarray = field(repr=False)
    in_degree: np.ndarray = field(repr=False)

    @property
    def n_sum(self) -> int:
        return self.layout.n_sum

    def coalition_adjacency(self, i: int) -> np.ndarray:
        b = self.layout.block(i)
        return self.adjacency[b, b]

    def in_neighbors(self, flat: int) -> list[int]:
        return np.flatnonzero(self.adjacency[flat]).tolist()

    def intra_in_neighbors(self, flat: int) -> list[int]:
        b = self.layout.block(self.layout.coalition_of(flat))
        return [s for s in self.in_neighbors(flat) if b.start <= s < b.stop]

    def intra_out_neighbors(self, flat: int) -> list[int]:
        b = self.layout.block(self.layout.coalition_of(flat))
        return [r for r in range(b.start, b.stop) if self.adjacency[r, flat]]

    def edge_strings(self) -> list[str]:
        return [format_edge(e, self.layout) for e in self.edges]


def build_graph(layout: CoalitionLayout, edges: Iterable[tuple[int, int] | str]) -> DirectedGameGraph:
    """Build a :class:`DirectedGameGraph` from flat-index pairs or edge strings.

    Raises:
        GraphError: on unknown agents, self-loops or duplicated edges.
    """
    n = layout.n_sum
    pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for e in edges:
        if isinstance(e, str):
            s, r = parse_edge(e, layout)
        else:
            s, r = int(e[0]), int(e[1])
            for v in (s, r):
                if not 0 <= v < n:
                    raise GraphError(f"unknown agent index {v}")
        if s == r:
            raise GraphError(f"self-loop on agent {format_edge((s, r), layout).split(' ')[0]}")
        if (s, r) in seen:
            raise GraphError(f"duplicate edge {format_edge((s, r), layout)}")
        seen.add((s, r))
        pairs.append((s, r))

    adjacency = np.zeros((n, n), dtype=bool)
    for s, r in pairs:
        adjacency[r, s] = True
    in_degree = adjacency.sum(axis=1).astype(np.int64)
    laplacian = np.diag(in_degree) - adjacency.astype(np.int64)
    return DirectedGameGraph(
        layout=layout,
        edges=tuple(pairs),
        adjacency=_frozen(adjacency),
        laplacian=_frozen(laplacian),
        in_degree=_frozen(in_degree),
    )


def is_strongly_connected(adjacency: np.ndarray) -> bool:
    if adjacency.shape[0] <= 1:
        return True
    n_comp, _ = connected_components(np.asarray(adjacency, dtype=np.int8), directed=True, connection="strong")
    return n_comp == 1


@dataclass(frozen=True)
class ConnectivityReport:
    """Outcome of the strong-connectivity check; ``failures`` names ``G`` or ``G_i``."""

    ok: bool
    failures: tuple[str, ...] = ()

    @property
    def message(self) -> str:
        if self.ok:
            return "graph G and every coalition subgraph are strongly connected"
        return "; ".join(
            "graph G not strongly connected" if f == "G" else f"subgraph {f} not strongly connected"
            for f in self.failures
        )


def check_connectivity(graph: DirectedGameGraph) -> ConnectivityReport:
    """Check that G and every coalition subgraph G_i are strongly connected."""
    failures = []
    if not is_strongly_connected(graph.adjacency):
        failures.append("G")
    for i in range(graph.layout.n_coalitions):
        if not is_strongly_connected(graph.coalition_adjacency(i)):
            failures.append(f"G_{i + 1}")
    return ConnectivityReport(ok=not failures, failures=tuple(failures))


def require_connectivity(graph: DirectedGameGraph) -> None:
    report = check_connectivity(graph)
    if not report.ok:
        raise ConnectivityError(report.message)


# --- stationary vectors -----------------------------------------------------


def _check_row_stochastic(M: np.ndarray, what: str) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise WeightError(f"{what} must be square, got shape {M.shape}")
    if np.any(M < 0):
        raise WeightError(f"{what} has negative entries")
    sums = M.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > STOCHASTIC_TOL:
        raise WeightError(f"{what} is not row-stochastic (row sums {np.round(sums, 15).tolist()})")
    if not is_strongly_connected(M > 0):
        raise WeightError(f"{what} is reducible")


def _power_left(M: np.ndarray, tol: float, max_iter: int) -> np.ndarray | None:
    n = M.shape[0]
    lazy = 0.5 * (M + np.eye(n))  # aperiodic, same stationary vector
    u = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = u @ lazy
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - u)) <= tol * max(1.0, np.max(np.abs(nxt))):
            return nxt
        u = nxt
    return None


def _direct_left(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    system = np.vstack([M.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    u, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    return u


def stationary_left_vector(
    M: np.ndarray,
    scale: float = 1.0,
    *,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    method: str = "power",
) -> np.ndarray:
    """Positive ``u`` with ``u @ M == u`` and ``u.sum() == scale``.

    Power iteration is run on the lazy chain ``(M + I)/2``; if it does not meet
    ``tol`` within ``max_iter`` rounds and ``M`` is at most 64x64, the stationarity
    system is solved directly instead. ``method="direct"`` skips the iteration.

    Raises:
        WeightError: ``M`` is not an irreducible row-stochastic matrix.
        ConvergenceError: iteration cap hit and no direct fallback available.
    """
    M = np.asarray(M, dtype=float)
    _check_row_stochastic(M, "matrix")
    if scale <= 0:
        raise ValueError("scale must be positive")
    n = M.shape[0]
    if method == "direct":
        u = _direct_left(M)
    else:
        u = _power_left(M, tol, max_iter)
        if u is None:
            if n > DIRECT_SOLVE_MAX_N:
                raise ConvergenceError(f"power iteration did not converge in {max_iter} rounds")
            u = _direct_left(M)
    u = u / u.sum() * scale
    if np.any(u <= 0):
        raise WeightError("stationary vector is not strictly positive")
    return u


def stationary_right_vector(M: np.ndarray, scale: float = 1.0, **kwargs) -> np.ndarray:
    """Positive ``v`` with ``M @ v == v`` and ``v.sum() == scale`` for column-stochastic ``M``."""
    return stationary_left_vector(np.asarray(M, dtype=float).T, scale, **kwargs)


# --- intra-coalition weights ------------------------------------------------


@dataclass(frozen=True)
class IntraCoalitionWeights:
    """Pull (row-stochastic) and push (column-stochastic) matrices per coalition.

    ``pull[i][j, m]`` is the weight agent j of coalition i puts on the state it
    pulls from agent m; ``push[i][j, m]`` is the fraction of agent m's tracker
    that agent m pushes to agent j. ``left[i]`` and ``right[i]`` are their
    stationary vectors, each summing to the coalition size.
    """

    pull: tuple[np.ndarray, ...]
    push: tuple[np.ndarray, ...]
    left: tuple[np.ndarray, ...]
    right: tuple[np.ndarray, ...]


def _support(graph: DirectedGameGraph, i: int) -> np.ndarray:
    A = graph.coalition_adjacency(i)
    return A | np.eye(A.shape[0], dtype=bool)


def _finish(pull: Sequence[np.ndarray], push: Sequence[np.ndarray]) -> IntraCoalitionWeights:
    left, right = [], []
    for R, C in zip(pull, push):
        n = R.shape[0]
        left.append(_frozen(stationary_left_vector(R, n)))
        right.append(_frozen(stationary_right_vector(C, n)))
    return IntraCoalitionWeights(
        pull=tuple(_frozen(R) for R in pull),
        push=tuple(_frozen(C) for C in push),
        left=tuple(left),
        right=tuple(right),
    )


def uniform_weights(graph: DirectedGameGraph) -> IntraCoalitionWeights:
    """Equal weights over each agent's intra-coalition in- (pull) and out- (push) neighborhoods plus itself."""
    require_connectivity(graph)
    pull, push = [], []
    for i in range(graph.layout.n_coalitions):
        S = _support(graph, i).astype(float)
        pull.append(S / S.sum(axis=1, keepdims=True))
        push.append(S / S.sum(axis=0, keepdims=True))
    return _finish(pull, push)


def weight_violations(
    graph: DirectedGameGraph,
    pull: Sequence[np.ndarray],
    push: Sequence[np.ndarray],
    tol: float = STOCHASTIC_TOL,
) -> list[str]:
    """Human-readable list of every way explicit weights break the mixing conditions."""
    problems = []
    layout = graph.layout
    if len(pull) != layout.n_coalitions or len(push) != layout.n_coalitions:
        return [f"expected {layout.n_coalitions} pull and push tables"]
    for i in range(layout.n_coalitions):
        n = layout.sizes[i]
        S = _support(graph, i)
        for name, M, axis, kind in (
            (f"R_{i + 1}", np.asarray(pull[i], dtype=float), 1, "row"),
            (f"C_{i + 1}", np.asarray(push[i], dtype=float), 0, "column"),
        ):
            if M.shape != (n, n):
                problems.append(f"{name} must be {n}x{n}, got {M.shape}")
                continue
            if np.any(M[S] <= 0):
                problems.append(f"{name} must be positive on each agent's neighborhood and diagonal")
            if np.any(M[~S] != 0):
                problems.append(f"{name} has weight on a pair that is not an intra-coalition edge")
            sums = M.sum(axis=axis)
            for idx, s in enumerate(sums):
                if abs(s - 1.0) > tol:
                    problems.append(
                        f"{kind} {idx + 1} of {name} sums to {s:.12g}; "
                        f"{'pull' if axis == 1 else 'push'} weights must be {kind}-stochastic"
                    )
    return problems


def explicit_weights(
    graph: DirectedGameGraph,
    pull: Sequence[np.ndarray],
    push: Sequence[np.ndarray],
    tol: float = STOCHASTIC_TOL,
) -> IntraCoalitionWeights:
    """Validate user-supplied weight tables and attach their stationary vectors."""
    require_connectivity(graph)
    problems = weight_violations(graph, pull, push, tol)
    if problems:
        raise WeightError("; ".join(problems))
    return _finish([np.asarray(R, dtype=float) for R in pull], [np.asarray(C, dtype=float) for C in push])


def unchecked_weights(pull: Sequence[np.ndarray], push: Sequence[np.ndarray]) -> IntraCoalitionWeights:
    """Wrap weight tables without validation; stationary vectors are left empty.

    Only meant for diagnostics that must report *why* a table is unusable.
    """
    empty = tuple(np.zeros(0) for _ in pull)
    return IntraCoalitionWeights(
        pull=tuple(_frozen(np.asarray(R, dtype=float)) for R in pull),
        push=tuple(_frozen(np.asarray(C, dtype=float)) for C in push),
        left=empty,
        right=empty,
    )
