"""Agent costs, coalition costs and the pseudo-gradient of the induced N-player game."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import AssumptionError, DimensionError
from .topology import CoalitionLayout

FD_STEP = 1e-5
DEFAULT_SAMPLES = 10_000


class CostFunction:
    """A differentiable cost ``f(x)`` over the full joint state."""

    n_sum: int

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scaled(self, t: float) -> "CostFunction":
        raise NotImplementedError


class QuadraticCost(CostFunction):
    """``f(x) = 0.5 x'Hx + g'x + c`` with symmetric ``H``."""

    def __init__(self, hessian: np.ndarray, linear: np.ndarray, constant: float = 0.0):
        H = np.array(hessian, dtype=float)
        g = np.array(linear, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or g.shape != (H.shape[0],):
            raise DimensionError(f"inconsistent quadratic shapes {H.shape} and {g.shape}")
        if not np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
            raise ValueError("hessian must be symmetric")
        H.setflags(write=False)
        g.setflags(write=False)
        self.hessian = H
        self.linear = g
        self.constant = float(constant)
        self.n_sum = H.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.hessian @ x + self.linear @ x + self.constant)

    def gradient(self, x):
        return self.hessian @ np.asarray(x, dtype=float) + self.linear

    def scaled(self, t):
        return QuadraticCost(t * self.hessian, t * self.linear, t * self.constant)

    def __repr__(self):
        return f"QuadraticCost(n_sum={self.n_sum})"


class QuadraticAgentCost(QuadraticCost):
    """Price-competition cost ``m (x_a^2 - s x_a) - h x_a (1'x)`` of the agent at flat index ``a``."""

    def __init__(self, m: float, s: float, h: float, index: int, n_sum: int):
        if m <= 0:
            raise ValueError("m must be positive")
        H = np.zeros((n_sum, n_sum))
        H[index, :] -= h
        H[:, index] -= h
        H[index, index] = 2.0 * (m - h)
        g = np.zeros(n_sum)
        g[index] = -m * s
        super().__init__(H, g)
        self.m, self.s, self.h, self.index = float(m), float(s), float(h), index

    def value(self, x):
        x = np.asarray(x, dtype=float)
        xa = x[self.index]
        return float(self.m * (xa * xa - self.s * xa) - self.h * xa * x.sum())

    def scaled(self, t):
        return QuadraticCost(t * self.hessian, t * self.linear)

    def __repr__(self):
        return f"QuadraticAgentCost(m={self.m}, s={self.s}, h={self.h}, index={self.index})"


class CallableCost(CostFunction):
    """Wrap plain callables; without ``gradient`` a central finite difference is used."""

    def __init__(
        self,
        value: Callable[[np.ndarray], float],
        n_sum: int,
        gradient: Callable[[np.ndarray], np.ndarray] | None = None,
        fd_step: float = FD_STEP,
    ):
        self._value = value
        self._gradient = gradient
        self.n_sum = n_sum
        self.fd_step = fd_step

    def value(self, x):
        return float(self._value(np.asarray(x, dtype=float)))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self._gradient is not None:
            return np.asarray(self._gradient(x), dtype=float)
        return finite_difference_gradient(self._value, x, self.fd_step)

    def scaled(self, t):
        grad = None if self._gradient is None else (lambda x, g=self._gradient: t * np.asarray(g(x)))
        return CallableCost(lambda x, f=self._value: t * f(x), self.n_sum, grad, self.fd_step)


def finite_difference_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        out[k] = (f(x + e) - f(x - e)) / (2 * step)
    return out


@dataclass(frozen=True)
class GameSpec:
    layout: CoalitionLayout
    costs: tuple[CostFunction, ...]

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        n = self.layout.n_sum
        if len(self.costs) != n:
            raise DimensionError(f"expected {n} agent costs, got {len(self.costs)}")
        for c in self.costs:
            if c.n_sum != n:
                raise DimensionError(f"cost defined on R^{c.n_sum}, state has dimension {n}")
        if self.is_quadratic:
            H = np.stack([c.hessian for c in self.costs])
            g = np.stack([c.linear for c in self.costs])
            H.setflags(write=False)
            g.setflags(write=False)
            object.__setattr__(self, "_hessians", H)
            object.__setattr__(self, "_linears", g)

    @property
    def is_quadratic(self) -> bool:
        return all(isinstance(c, QuadraticCost) for c in self.costs)

    @property
    def n_sum(self) -> int:
        return self.layout.n_sum

    def scaled(self, t: float) -> "GameSpec":
        return GameSpec(self.layout, tuple(c.scaled(t) for c in self.costs))

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Row ``a`` holds the full gradient of agent ``a``'s cost at ``points[a]``."""
        points = np.asarray(points, dtype=float)
        if points.shape != (self.n_sum, self.n_sum):
            raise DimensionError(f"points must be {self.n_sum}x{self.n_sum}, got {points.shape}")
        if self.is_quadratic:
            return np.einsum("aij,aj->ai", self._hessians, points) + self._linears
        return np.stack([c.gradient(p) for c, p in zip(self.costs, points)])

    def coalition_partials(self, points: np.ndarray) -> list[np.ndarray]:
        """Own-coalition partials for every agent, as one (n_i, n_i) table per coalition.

        Row ``j`` of table ``i`` is agent ``ij``'s partial derivatives with respect to
        the states of coalition ``i``, evaluated at ``points[ij]``.
        """
        G = self.gradients(points)
        return [G[b, b] for b in (self.layout.block(i) for i in range(self.layout.n_coalitions))]


def _check_len(v: np.ndarray, n: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionError(f"{what} must have length {n}, got shape {v.shape}")
    return v


def expand(layout: CoalitionLayout, y: Sequence[float]) -> np.ndarray:
    """Replicate each coalition decision across that coalition's agents."""
    y = _check_len(y, layout.n_coalitions, "y")
    return np.repeat(y, layout.sizes)


def expansion_matrix(layout: CoalitionLayout) -> np.ndarray:
    E = np.zeros((layout.n_sum, layout.n_coalitions))
    E[np.arange(layout.n_sum), layout.membership()] = 1.0
    return E


def coalition_cost(game: GameSpec, i: int, x: np.ndarray) -> float:
    x = _check_len(x, game.n_sum, "x")
    return sum(game.costs[a].value(x) for a in range(game.n_sum)[game.layout.block(i)])


def induced_cost(game: GameSpec, i: int, y: Sequence[float]) -> float:
    """Cost of coalition ``i`` when every coalition plays its common decision from ``y``."""
    return coalition_cost(game, i, expand(game.layout, y))


def agent_partials(game: GameSpec, agent: int, estimate: np.ndarray) -> np.ndarray:
    """Partials of agent ``agent``'s cost w.r.t. its own coalition's states, at ``estimate``."""
    estimate = _check_len(estimate, game.n_sum, "estimate")
    b = game.layout.block(game.layout.coalition_of(agent))
    return game.costs[agent].gradient(estimate)[b]


def coalition_gradient(game: GameSpec, i: int, x: np.ndarray) -> np.ndarray:
    """Gradient of coalition ``i``'s summed cost with respect to its own block."""
    x = _check_len(x, game.n_sum, "x")
    b = game.layout.block(i)
    return sum(agent_partials(game, a, x) for a in range(b.start, b.stop))


def pseudo_gradient(game: GameSpec, y: Sequence[float]) -> np.ndarray:
    """Own-decision derivative of each coalition's induced cost."""
    x = expand(game.layout, y)
    return np.array([coalition_gradient(game, i, x).sum() for i in range(game.layout.n_coalitions)])


def pseudo_gradient_affine(game: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    """For quadratic games return ``(J, b)`` with ``pseudo_gradient(y) == J @ y - b``."""
    if not game.is_quadratic:
        raise TypeError("affine pseudo-gradient needs an all-quadratic game")
    layout = game.layout
    E = expansion_matrix(layout)
    N = layout.n_coalitions
    J = np.empty((N, N))
    b = np.empty(N)
    for i in range(N):
        blk = layout.block(i)
        H = game._hessians[blk].sum(axis=0)
        g = game._linears[blk].sum(axis=0)
        J[i] = H[blk].sum(axis=0) @ E
        b[i] = -g[blk].sum()
    return J, b


def _secant_pairs(rng: np.random.Generator, n: int, samples: int, box: tuple[float, float]):
    lo, hi = box
    a = rng.uniform(lo, hi, size=(samples, n))
    b = rng.uniform(lo, hi, size=(samples, n))
    return a, b


def estimate_lipschitz(
    game: GameSpec,
    agent: int,
    samples: int = DEFAULT_SAMPLES,
    box: tuple[float, float] = (-10.0, 10.0),
    seed: int = 0,
) -> float:
    """Lipschitz constant of agent ``agent``'s gradient.

    Exact (spectral norm of the Hessian) for quadratic costs; otherwise the
    largest secant ratio over ``samples`` random pairs in ``box``, which is only
    a lower estimate.
    """
    cost = game.costs[agent]
    if isinstance(cost, QuadraticCost):
        return float(np.linalg.norm(cost.hessian, 2))
    if samples <= 0:
        raise ValueError("sampling budget must be positive")
    rng = np.random.default_rng(seed)
    best = 0.0
    for a, b in zip(*_secant_pairs(rng, game.n_sum, samples, box)):
        d = np.linalg.norm(a - b)
        if d > 0:
            best = max(best, np.linalg.norm(cost.gradient(a) - cost.gradient(b)) / d)
    return float(best)


def estimate_pseudo_gradient_lipschitz(
    game: GameSpec,
    samples: int = DEFAULT_SAMPLES,
    box: tuple[float, float] = (-10.0, 10.0),
    seed: int = 0,
) -> float:
    if game.is_quadratic:
        J, _ = pseudo_gradient_affine(game)
        return float(np.linalg.norm(J, 2))
    if samples <= 0:
        raise ValueError("sampling budget must be positive")
    rng = np.random.default_rng(seed)
    best = 0.0
    for a, b in zip(*_secant_pairs(rng, game.layout.n_coalitions, samples, box)):
        d = np.linalg.norm(a - b)
        if d > 0:
            best = max(best, np.linalg.norm(pseudo_gradient(game, a) - pseudo_gradient(game, b)) / d)
    return float(best)


def estimate_monotonicity(
    game: GameSpec,
    samples: int = DEFAULT_SAMPLES,
    box: tuple[float, float] = (-10.0, 10.0),
    seed: int = 0,
) -> float:
    """Strong-monotonicity modulus of the pseudo-gradient.

    Quadratic games: smallest eigenvalue of the symmetric part of its Jacobian.
    Otherwise: smallest ``(a-b)'(Q(a)-Q(b)) / |a-b|^2`` over sampled pairs, an
    upper estimate that is not certified.

    Raises:
        AssumptionError: the modulus is not positive.
    """
    if game.is_quadratic:
        J, _ = pseudo_gradient_affine(game)
        value = float(np.linalg.eigvalsh(0.5 * (J + J.T)).min())
    else:
        if samples <= 0:
            raise ValueError("sampling budget must be positive")
        rng = np.random.default_rng(seed)
        value = np.inf
        for a, b in zip(*_secant_pairs(rng, game.layout.n_coalitions, samples, box)):
            d = a - b
            dd = d @ d
            if dd > 0:
                value = min(value, d @ (pseudo_gradient(game, a) - pseudo_gradient(game, b)) / dd)
        value = float(value)
    if not value > 0:
        raise AssumptionError(f"pseudo-gradient is not strongly monotone (modulus estimate {value:.6g})")
    return value


def gradient_check(
    cost: CostFunction,
    probes: np.ndarray,
    step: float = FD_STEP,
) -> float:
    """Worst relative gap between ``cost.gradient`` and central differences over ``probes``.

    The gap is measured as ``|g - fd|_inf / max(1, |fd|_inf)``.
    """
    worst = 0.0
    for p in np.atleast_2d(probes):
        g = cost.gradient(p)
        fd = finite_difference_gradient(cost.value, p, step)
        worst = max(worst, float(np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd)))))
    return worst


def paper_costs(layout: CoalitionLayout, m: Sequence[float], s: Sequence[float], h: Sequence[float]) -> GameSpec:
    n = layout.n_sum
    if not len(m) == len(s) == len(h) == n:
        raise DimensionError(f"need {n} (m, s, h) triples")
    return GameSpec(layout, tuple(QuadraticAgentCost(m[a], s[a], h[a], a, n) for a in range(n)))
