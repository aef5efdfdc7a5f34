"""Centralized Nash equilibrium solvers used as ground truth for the distributed seeker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, ConvergenceError, DivergenceError
from .game import (
    GameSpec,
    coalition_gradient,
    estimate_monotonicity,
    estimate_pseudo_gradient_lipschitz,
    expand,
    pseudo_gradient,
    pseudo_gradient_affine,
)


@dataclass(frozen=True)
class EquilibriumResult:
    y_star: np.ndarray
    x_star: np.ndarray
    residual: float
    method: str  # "closed-form" | "fixed-point"
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "y_star": self.y_star.tolist(),
            "x_star": self.x_star.tolist(),
            "residual": self.residual,
            "method": self.method,
            "iterations": self.iterations,
        }


def solve_ne_quadratic(game: GameSpec) -> EquilibriumResult:
    """Solve ``J y = b`` for the affine pseudo-gradient of a quadratic game.

    Raises:
        TypeError: some agent cost is not quadratic.
        AssumptionError: the Jacobian is singular.
    """
    J, b = pseudo_gradient_affine(game)
    try:
        y = np.linalg.solve(J, b)
    except np.linalg.LinAlgError as exc:
        raise AssumptionError("pseudo-gradient Jacobian is singular; no unique equilibrium") from exc
    if np.linalg.cond(J) > 1e12:
        raise AssumptionError(f"pseudo-gradient Jacobian is near-singular (cond {np.linalg.cond(J):.3g})")
    residual = float(np.linalg.norm(J @ y - b))
    return EquilibriumResult(y, expand(game.layout, y), residual, "closed-form")


def solve_ne_fixed_point(
    game: GameSpec,
    step: float | None = None,
    tol: float = 1e-11,
    max_iter: int = 1_000_000,
    y0: np.ndarray | None = None,
) -> EquilibriumResult:
    """Forward iteration ``y <- y - step * Q(y)``.

    With a strongly monotone, Lipschitz pseudo-gradient the map is a contraction
    for ``0 < step < 2 l / L^2``; the default ``step = l / L^2`` uses the
    (possibly sampled) constants from :mod:`ne_lab.game`.
    """
    N = game.layout.n_coalitions
    if step is None:
        l = estimate_monotonicity(game)
        L = estimate_pseudo_gradient_lipschitz(game)
        step = l / L**2
    if step <= 0:
        raise ValueError("step must be positive")
    y = np.zeros(N) if y0 is None else np.array(y0, dtype=float)
    q = pseudo_gradient(game, y)
    start = np.linalg.norm(q)
    for k in range(max_iter):
        r = float(np.linalg.norm(q))
        if r <= tol:
            return EquilibriumResult(y, expand(game.layout, y), r, "fixed-point", k)
        if not np.isfinite(r) or r > 1e12 * max(1.0, start):
            raise DivergenceError(f"fixed-point iteration diverged (|Q| = {r:.3g})", k)
        y = y - step * q
        q = pseudo_gradient(game, y)
    raise ConvergenceError(f"fixed-point iteration hit the {max_iter} iteration cap (|Q| = {np.linalg.norm(q):.3g})")


@dataclass
class VerificationReport:
    ok: bool
    spread: list[float] = field(default_factory=list)
    gradient_residual: list[float] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "spread": self.spread,
            "gradient_residual": self.gradient_residual,
            "failures": self.failures,
        }


def verify_ne(game: GameSpec, x: np.ndarray, tol: float) -> VerificationReport:
    """Check consensus inside each coalition and the stationarity ``1' df_i/dx_i(x) = 0``."""
    x = np.asarray(x, dtype=float)
    layout = game.layout
    spread, residual, failures = [], [], []
    for i in range(layout.n_coalitions):
        blk = x[layout.block(i)]
        s = float(blk.max() - blk.min())
        r = float(abs(coalition_gradient(game, i, x).sum()))
        spread.append(s)
        residual.append(r)
        if s > tol:
            failures.append(f"coalition {i + 1}: states disagree (spread {s:.3g})")
        if r > tol:
            failures.append(f"coalition {i + 1}: stationarity residual {r:.3g}")
    return VerificationReport(not failures, spread, residual, failures)
