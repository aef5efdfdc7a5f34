"""Random valid instances and reference transcriptions shared by the test modules."""

from __future__ import annotations

import numpy as np

from ne_lab.game import GameSpec, QuadraticCost, paper_costs, pseudo_gradient_affine
from ne_lab.scenario import PAPER_H, PAPER_M, PAPER_S
from ne_lab.topology import CoalitionLayout, build_graph, uniform_weights

PAPER_X0 = [0, 10, 20, 0, 10, 20, 30, 0, 10, 20]


def ring_edges(layout: CoalitionLayout, bridges=((1, 2), (2, 3), (3, 1))) -> list[str]:
    edges = []
    for i, n in enumerate(layout.sizes, start=1):
        for j in range(1, n + 1):
            k = j % n + 1
            for e in (f"{i}.{j} -> {i}.{k}", f"{i}.{k} -> {i}.{j}"):
                if j != k and e not in edges:
                    edges.append(e)
    for a, b in bridges:
        edges += [f"{a}.1 -> {b}.1", f"{b}.1 -> {a}.1"]
    return edges


def paper_instance():
    layout = CoalitionLayout((3, 4, 3))
    graph = build_graph(layout, ring_edges(layout))
    return paper_costs(layout, PAPER_M, PAPER_S, PAPER_H), graph, uniform_weights(graph)


def dfs_strongly_connected(adjacency: np.ndarray) -> bool:
    """Reachability by explicit DFS from every node; ``adjacency[receiver, sender]``."""
    n = adjacency.shape[0]
    out = [np.flatnonzero(adjacency[:, s]) for s in range(n)]
    for start in range(n):
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for w in out[v]:
                if w not in seen:
                    seen.add(int(w))
                    stack.append(int(w))
        if len(seen) != n:
            return False
    return True


def random_layout(rng, max_coalitions=3, max_size=3, min_total=2) -> CoalitionLayout:
    while True:
        N = int(rng.integers(1, max_coalitions + 1))
        sizes = tuple(int(s) for s in rng.integers(1, max_size + 1, N))
        if sum(sizes) >= min_total:
            return CoalitionLayout(sizes)


def random_valid_graph(rng, layout: CoalitionLayout, extra: float = 0.3):
    """Directed graph with every coalition subgraph and the whole graph strongly connected.

    Each coalition gets a random directed Hamiltonian cycle; coalitions are
    chained by a directed cycle through random members; then random extra
    edges are added with probability ``extra``.
    """
    n = layout.n_sum
    edges = set()
    members = [list(range(layout.offsets[i], layout.offsets[i] + s)) for i, s in enumerate(layout.sizes)]
    for block in members:
        if len(block) > 1:
            order = rng.permutation(block)
            for a, b in zip(order, np.roll(order, -1)):
                edges.add((int(a), int(b)))
    if len(members) > 1:
        reps = [int(rng.choice(b)) for b in members]
        reps_in = [int(rng.choice(b)) for b in members]
        N = len(members)
        for i in range(N):
            edges.add((reps[i], reps_in[(i + 1) % N]))
    for s in range(n):
        for r in range(n):
            if s != r and rng.random() < extra:
                edges.add((s, r))
    return build_graph(layout, sorted(edges))


def random_quadratic_game(rng, layout: CoalitionLayout, coupling: float = 0.5, margin: float = 0.5) -> GameSpec:
    """Quadratic game whose pseudo-gradient is strongly monotone.

    Every agent gets a random symmetric Hessian; the own diagonal entry is then
    raised until the symmetric part of the pseudo-gradient Jacobian has
    smallest eigenvalue at least ``margin``.
    """
    n = layout.n_sum
    Hs = []
    for a in range(n):
        B = rng.normal(0.0, coupling, (n, n))
        H = 0.5 * (B + B.T)
        H[a, a] = abs(H[a, a]) + rng.uniform(1.0, 3.0)
        Hs.append(H)
    gs = [rng.normal(0.0, 5.0, n) for _ in range(n)]
    boost = 0.0
    while True:
        costs = []
        for a in range(n):
            H = Hs[a].copy()
            H[a, a] += boost
            costs.append(QuadraticCost(H, gs[a]))
        game = GameSpec(layout, tuple(costs))
        J, _ = pseudo_gradient_affine(game)
        if np.linalg.eigvalsh(0.5 * (J + J.T)).min() >= margin:
            return game
        boost = 2 * boost + 1.0


def random_instance(seed: int, max_coalitions=3, max_size=3):
    rng = np.random.default_rng(seed)
    layout = random_layout(rng, max_coalitions, max_size)
    graph = random_valid_graph(rng, layout)
    game = random_quadratic_game(rng, layout)
    x0 = rng.uniform(-5, 5, layout.n_sum)
    return game, graph, uniform_weights(graph), x0


def transcribed_round(game, graph, weights, x, tracker, estimate, alpha):
    """One round of the per-agent laws written as plain loops.

    ``tracker[a]`` is agent a's vector over its coalition; ``estimate[a]`` its
    estimate of the full state. Self-weights are part of the weighted sums.
    """
    layout = graph.layout
    n = layout.n_sum
    A = graph.adjacency
    x_new = np.zeros(n)
    est_new = np.zeros((n, n))
    tr_new = [None] * n
    for a in range(n):
        i = layout.coalition_of(a)
        off = layout.offsets[i]
        ni = layout.sizes[i]
        j = a - off
        R = weights.pull[i]
        acc = 0.0
        for m in range(ni):
            acc += R[j, m] * x[off + m]
        x_new[a] = acc - alpha / ni * sum(tracker[a][m] for m in range(ni))
    for a in range(n):
        d = sum(1 for b in range(n) if A[a, b])
        for p in range(n):
            anchor = 1.0 if A[a, p] else 0.0
            s = 0.0
            for b in range(n):
                if A[a, b]:
                    s += estimate[a][p] - estimate[b][p]
            s += anchor * (estimate[a][p] - x[p])
            est_new[a, p] = estimate[a][p] - s / (d + anchor)
    for a in range(n):
        i = layout.coalition_of(a)
        off = layout.offsets[i]
        ni = layout.sizes[i]
        j = a - off
        C = weights.push[i]
        g_new = game.costs[a].gradient(est_new[a])
        g_old = game.costs[a].gradient(estimate[a])
        vec = np.zeros(ni)
        for l in range(ni):
            acc = 0.0
            for m in range(ni):
                acc += C[j, m] * tracker[off + m][l]
            vec[l] = acc + g_new[off + l] - g_old[off + l]
        tr_new[a] = vec
    return x_new, tr_new, est_new
