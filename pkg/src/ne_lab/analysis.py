"""Convergence diagnostics: error coordinates, contraction certificates, Lyapunov audit.

The error coordinates split a swarm state into

* ``average``   -- the stationary-weighted coalition averages minus the equilibrium;
* ``consensus`` -- each state minus its coalition average;
* ``tracker``   -- each coalition's tracker table minus its right-Perron share of the mean;
* ``estimate``  -- every agent's joint-state estimate minus the averaged state.

:func:`safe_step_size` assembles the step-size bound from the Lipschitz and
monotonicity constants and the solutions of the discrete Lyapunov equations
``A' W A - W = -I`` for the three deflated iteration matrices (push, pull and
estimator). :func:`lyapunov_audit` then re-checks every per-step inequality of
the convergence argument on a recorded trajectory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CertificateError
from .game import GameSpec, estimate_lipschitz, estimate_monotonicity, expand
from .seeker import SwarmState, TrajectoryLog
from .topology import (
    STOCHASTIC_TOL,
    DirectedGameGraph,
    IntraCoalitionWeights,
    stationary_left_vector,
    stationary_right_vector,
)

LYAPUNOV_RESIDUAL_TOL = 1e-10
DIRECT_LYAPUNOV_MAX_N = 20  # Kronecker system of size n^2 <= 400
AUDIT_RTOL = 1e-12


def norm2(A: np.ndarray) -> float:
    """Spectral norm (largest singular value); Euclidean norm for vectors."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        return float(np.linalg.norm(A))
    return float(np.linalg.norm(A, 2))


# --- error coordinates ------------------------------------------------------


@dataclass(frozen=True)
class ErrorDecomposition:
    tracker: tuple[np.ndarray, ...]
    average: np.ndarray
    consensus: np.ndarray
    estimate: np.ndarray

    @property
    def tracker_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(t * t) for t in self.tracker)))

    @property
    def average_norm(self) -> float:
        return float(np.linalg.norm(self.average))

    @property
    def consensus_norm(self) -> float:
        return float(np.linalg.norm(self.consensus))

    @property
    def estimate_norm(self) -> float:
        return float(np.linalg.norm(self.estimate))

    def norms(self) -> dict[str, float]:
        return {
            "consensus": self.consensus_norm,
            "tracker": self.tracker_norm,
            "estimate": self.estimate_norm,
            "average": self.average_norm,
        }


def coalition_averages(x: np.ndarray, weights: IntraCoalitionWeights, layout) -> np.ndarray:
    return np.array([u @ x[layout.block(i)] / u.size for i, u in enumerate(weights.left)])


def compute_errors(state: SwarmState, weights: IntraCoalitionWeights, y_star: Sequence[float]) -> ErrorDecomposition:
    if not weights.left or any(u.size == 0 for u in weights.left):
        raise ValueError("weights carry no stationary vectors")
    sizes = tuple(u.size for u in weights.left)
    from .topology import CoalitionLayout

    layout = CoalitionLayout(sizes)
    y_star = np.asarray(y_star, dtype=float)
    xbar = coalition_averages(state.x, weights, layout)
    Xbar = expand(layout, xbar)
    tracker = tuple(
        T - np.outer(v, T.mean(axis=0)) for T, v in zip(state.tracker, weights.right)
    )
    return ErrorDecomposition(
        tracker=tracker,
        average=xbar - y_star,
        consensus=state.x - Xbar,
        estimate=state.estimate - Xbar[None, :],
    )


# --- Lyapunov equations -----------------------------------------------------


def spectral_radius(A: np.ndarray) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def lyapunov_residual(A: np.ndarray, W: np.ndarray) -> float:
    A = np.atleast_2d(A)
    W = np.atleast_2d(W)
    return float(np.max(np.abs(A.T @ W @ A - W + np.eye(A.shape[0]))))


def _lyapunov_direct(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    K = np.eye(n * n) - np.kron(A.T, A.T)
    w = np.linalg.solve(K, np.eye(n).reshape(-1, order="F"))
    W = w.reshape((n, n), order="F")
    return 0.5 * (W + W.T)


def _lyapunov_series(A: np.ndarray, max_doublings: int = 64) -> np.ndarray:
    # W = sum_k (A')^k A^k, accumulated by squaring: W_{2m} = W_m + (A^m)' W_m A^m.
    n = A.shape[0]
    W = np.eye(n)
    P = A.copy()
    for _ in range(max_doublings):
        inc = P.T @ W @ P
        W = W + inc
        if np.max(np.abs(inc)) <= 1e-17 * np.max(np.abs(W)):
            break
        P = P @ P
    return 0.5 * (W + W.T)


def solve_discrete_lyapunov(A: np.ndarray, method: str = "auto") -> np.ndarray:
    """Solve ``A' W A - W = -I`` for Schur-stable ``A``.

    ``method`` is ``"direct"`` (vectorised Kronecker system), ``"series"``
    (doubling summation of the convergent series) or ``"auto"``, which picks
    direct for ``n <= 20``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if method == "auto":
        method = "direct" if A.shape[0] <= DIRECT_LYAPUNOV_MAX_N else "series"
    if method == "direct":
        return _lyapunov_direct(A)
    if method == "series":
        return _lyapunov_series(A)
    raise ValueError(f"unknown method {method!r}")


def schur_and_lyapunov(A: np.ndarray, method: str = "auto") -> tuple[float, np.ndarray | None]:
    """Spectral radius of ``A`` and, when it is below one, the Lyapunov solution ``W``."""
    rho = spectral_radius(A)
    if rho >= 1.0:
        return rho, None
    return rho, solve_discrete_lyapunov(A, method)


# --- estimator matrices -----------------------------------------------------


def build_estimator_matrices(graph: DirectedGameGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gain ``Gamma``, anchor ``A_d`` and iteration matrix ``M`` of the stacked estimator.

    Stacking is agent-major: entry ``a * n + b`` is agent ``a``'s estimate of agent
    ``b``. ``M = I - Gamma (L (x) I + A_d)``.
    """
    n = graph.n_sum
    anchor = graph.adjacency.astype(float).reshape(-1)
    denom = np.repeat(graph.in_degree.astype(float), n) + anchor
    if np.any(denom == 0):
        raise CertificateError("an agent has no in-neighbor", "Gamma")
    Gamma = np.diag(1.0 / denom)
    A_d = np.diag(anchor)
    M = np.eye(n * n) - Gamma @ (np.kron(graph.laplacian.astype(float), np.eye(n)) + A_d)
    return Gamma, A_d, M


# --- certificates -----------------------------------------------------------


@dataclass(frozen=True)
class CertificateSet:
    """Every constant of the step-size bound plus the Lyapunov matrices behind it.

    Naming: *tracker* refers to the gradient trackers, *estimate* to the joint
    state estimates, *consensus* to the intra-coalition disagreement and
    *average* to the distance of the coalition averages from equilibrium.
    """

    alpha: float
    alpha_bound: float
    monotonicity: float
    lipschitz: np.ndarray
    push_deflated: tuple[np.ndarray, ...]
    pull_deflated: tuple[np.ndarray, ...]
    push_projector: tuple[np.ndarray, ...]
    pull_projector: tuple[np.ndarray, ...]
    estimator_gain: np.ndarray  # Gamma (L (x) I + A_d)
    estimator_matrix: np.ndarray  # M
    W_push: tuple[np.ndarray, ...]
    W_pull: tuple[np.ndarray, ...]
    W_estimator: np.ndarray
    W_average: np.ndarray  # diagonal entries
    radii: dict[str, float]
    residuals: dict[str, float]
    coupling_tracker_estimate: float
    coupling_tracker_consensus: float
    coupling_estimate_consensus: float
    coupling_average_tracker: float
    coupling_average_estimate: float
    drift_base: np.ndarray
    drift_average: np.ndarray
    drift_estimate: np.ndarray
    drift_consensus: np.ndarray
    weight_tracker: float
    weight_estimate: float
    weight_consensus: float
    drift_total: float
    contraction: float
    sizes: tuple[int, ...] = field(default=())
    uv: np.ndarray = field(default=None, repr=False)

    @property
    def certified(self) -> bool:
        return self.alpha <= self.alpha_bound

    def with_alpha(self, alpha: float) -> "CertificateSet":
        """Same certificates evaluated for a different step size.

        Only the average-error weight and the contraction rate depend on alpha;
        whether the decrease is guaranteed is reported by :attr:`certified`.
        """
        W_avg, eps = _alpha_dependent(alpha, self)
        return dataclasses.replace(self, alpha=alpha, W_average=W_avg, contraction=eps)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "alpha_bound": self.alpha_bound,
            "certified": self.certified,
            "monotonicity": self.monotonicity,
            "lipschitz": self.lipschitz.tolist(),
            "spectral_radii": self.radii,
            "lyapunov_residuals": self.residuals,
            "coupling_tracker_estimate": self.coupling_tracker_estimate,
            "coupling_tracker_consensus": self.coupling_tracker_consensus,
            "coupling_estimate_consensus": self.coupling_estimate_consensus,
            "coupling_average_tracker": self.coupling_average_tracker,
            "coupling_average_estimate": self.coupling_average_estimate,
            "drift_base": self.drift_base.tolist(),
            "drift_average": self.drift_average.tolist(),
            "drift_estimate": self.drift_estimate.tolist(),
            "drift_consensus": self.drift_consensus.tolist(),
            "weight_tracker": self.weight_tracker,
            "weight_estimate": self.weight_estimate,
            "weight_consensus": self.weight_consensus,
            "drift_total": self.drift_total,
            "contraction": self.contraction,
            "norm_W_average": float(np.max(self.W_average)),
            "norm_W_push": max(norm2(W) for W in self.W_push),
            "norm_W_pull": max(norm2(W) for W in self.W_pull),
            "norm_W_estimator": norm2(self.W_estimator),
        }


def _alpha_dependent(alpha, certs) -> tuple[np.ndarray, float]:
    n = np.asarray(certs.sizes, dtype=float)
    W_avg = n**3 / (alpha * certs.uv)
    eps = min(
        certs.monotonicity / (2.0 * np.max(W_avg)),
        1.0 / (8.0 * max(norm2(W) for W in certs.W_push)),
        1.0 / (8.0 * norm2(certs.W_estimator)),
        1.0 / (4.0 * max(norm2(W) for W in certs.W_pull)),
    )
    return W_avg, float(eps)


def _stationary_or_fail(weights: IntraCoalitionWeights, i: int) -> tuple[np.ndarray, np.ndarray]:
    R = np.asarray(weights.pull[i], dtype=float)
    C = np.asarray(weights.push[i], dtype=float)
    n = R.shape[0]
    rows = np.abs(R.sum(axis=1) - 1.0)
    cols = np.abs(C.sum(axis=0) - 1.0)
    if np.any(R < 0) or np.max(rows) > STOCHASTIC_TOL:
        raise CertificateError(
            f"R_{i + 1} is not row-stochastic (max row-sum error {np.max(rows):.3g}); "
            f"its deflation Rbar_{i + 1} is not a contraction certificate",
            f"Rbar_{i + 1}",
        )
    if np.any(C < 0) or np.max(cols) > STOCHASTIC_TOL:
        raise CertificateError(
            f"C_{i + 1} is not column-stochastic (max column-sum error {np.max(cols):.3g}); "
            f"its deflation Cbar_{i + 1} is not a contraction certificate",
            f"Cbar_{i + 1}",
        )
    if len(weights.left) > i and weights.left[i].size == n:
        return np.asarray(weights.left[i]), np.asarray(weights.right[i])
    try:
        return stationary_left_vector(R, n), stationary_right_vector(C, n)
    except Exception as exc:  # reducible tables
        raise CertificateError(f"coalition {i + 1}: {exc}", f"Rbar_{i + 1}") from exc


def _certify(name: str, A: np.ndarray, radii: dict, residuals: dict) -> np.ndarray:
    rho, W = schur_and_lyapunov(A)
    radii[name] = rho
    if W is None:
        raise CertificateError(f"{name} has spectral radius {rho:.6g} >= 1", name)
    res = lyapunov_residual(A, W)
    residuals[name] = res
    if res > LYAPUNOV_RESIDUAL_TOL * max(1.0, norm2(W)):
        raise CertificateError(f"Lyapunov solve for {name} left residual {res:.3g}", name)
    if np.min(np.linalg.eigvalsh(W)) <= 0:
        raise CertificateError(f"Lyapunov solution for {name} is not positive definite", name)
    return W


def safe_step_size(
    game: GameSpec,
    graph: DirectedGameGraph,
    weights: IntraCoalitionWeights,
    *,
    monotonicity: float | None = None,
    lipschitz: Sequence[float] | None = None,
) -> tuple[float, CertificateSet]:
    """Largest step size covered by the Lyapunov convergence argument.

    Returns ``alpha = min(l/(2 N s), g1/(8 s), g2/(8 s), 1)`` together with the
    full :class:`CertificateSet` evaluated at that alpha. The monotonicity
    modulus ``l`` and per-agent Lipschitz constants default to the closed forms
    for quadratic games (sampled estimates otherwise).

    Raises:
        CertificateError: a deflated matrix is not Schur or a weight table is
            not stochastic; ``.matrix`` names it.
        AssumptionError: the pseudo-gradient is not strongly monotone.
    """
    layout = graph.layout
    sizes = layout.sizes
    N, n_sum = layout.n_coalitions, layout.n_sum
    l = float(estimate_monotonicity(game) if monotonicity is None else monotonicity)
    lip = np.array(
        [estimate_lipschitz(game, a) for a in range(n_sum)] if lipschitz is None else lipschitz, dtype=float
    )
    radii: dict[str, float] = {}
    residuals: dict[str, float] = {}

    us, vs, Cbars, Rbars, Ivs, Ius, Wc, Wr = [], [], [], [], [], [], [], []
    for i, n in enumerate(sizes):
        u, v = _stationary_or_fail(weights, i)
        one = np.ones(n)
        Cbar = weights.push[i] - np.outer(v, one) / n
        Rbar = weights.pull[i] - np.outer(one, u) / n
        Wc.append(_certify(f"Cbar_{i + 1}", Cbar, radii, residuals))
        Wr.append(_certify(f"Rbar_{i + 1}", Rbar, radii, residuals))
        us.append(u)
        vs.append(v)
        Cbars.append(Cbar)
        Rbars.append(Rbar)
        Ivs.append(np.eye(n) - np.outer(v, one) / n)
        Ius.append(np.eye(n) - np.outer(one, u) / n)

    Gamma, A_d, M = build_estimator_matrices(graph)
    K = np.eye(n_sum * n_sum) - M
    WM = _certify("M", M, radii, residuals)

    nK2 = norm2(K) ** 2
    est_factor = 4.0 * norm2(M.T @ WM) ** 2 + 2.0 * norm2(WM)
    n_max = max(sizes)
    uv = np.array([u @ v for u, v in zip(us, vs)])
    lip_blocks = [lip[layout.block(i)] for i in range(N)]
    lip_sq = np.array([np.sum(b**2) for b in lip_blocks])

    tracker_est = 2.0 * max(
        (2.0 * norm2(Cbars[i].T @ Wc[i] @ Ivs[i]) ** 2 + norm2(Ivs[i].T @ Wc[i] @ Ivs[i])) * float(np.max(lip_blocks[i] ** 2))
        for i in range(N)
    ) * nK2
    tracker_cons = n_sum * tracker_est
    est_cons = n_sum * est_factor * nK2
    avg_tracker = 2.0 / l * max(sizes[i] ** 3 * norm2(us[i]) ** 2 / uv[i] ** 2 for i in range(N))
    avg_est = 2.0 * max(sizes[i] * lip_sq[i] for i in range(N)) / l

    b0 = np.array([sizes[i] + (1.0 / sizes[i] + n_max) * norm2(vs[i]) ** 2 * lip_sq[i] for i in range(N)])
    b1 = np.array([norm2(us[i]) ** 2 / (sizes[i] * uv[i]) * b0[i] for i in range(N)])
    b3 = np.array(
        [
            (2.0 * norm2(Rbars[i].T @ Wr[i] @ Ius[i]) ** 2 + norm2(Ius[i].T @ Wr[i] @ Ius[i])) * b0[i] / sizes[i] ** 2
            for i in range(N)
        ]
    )
    b2 = np.array(
        [n_sum * est_factor * norm2(np.outer(np.ones(sizes[i]), us[i]) / sizes[i] ** 2) ** 2 * b0[i] for i in range(N)]
    )

    g1 = 4.0 * avg_tracker
    g2 = 4.0 * (avg_est + tracker_est * g1)
    g3 = 4.0 * (tracker_cons * g1 + est_cons * g2)
    sigma = float(np.max(b1) + g2 * np.max(b2) + g3 * np.max(b3))
    alpha = float(min(l / (2.0 * N * sigma), g1 / (8.0 * sigma), g2 / (8.0 * sigma), 1.0))

    certs = CertificateSet(
        alpha=alpha,
        alpha_bound=alpha,
        monotonicity=l,
        lipschitz=lip,
        push_deflated=tuple(Cbars),
        pull_deflated=tuple(Rbars),
        push_projector=tuple(Ivs),
        pull_projector=tuple(Ius),
        estimator_gain=K,
        estimator_matrix=M,
        W_push=tuple(Wc),
        W_pull=tuple(Wr),
        W_estimator=WM,
        W_average=np.zeros(N),
        radii=radii,
        residuals=residuals,
        coupling_tracker_estimate=float(tracker_est),
        coupling_tracker_consensus=float(tracker_cons),
        coupling_estimate_consensus=float(est_cons),
        coupling_average_tracker=float(avg_tracker),
        coupling_average_estimate=float(avg_est),
        drift_base=b0,
        drift_average=b1,
        drift_estimate=b2,
        drift_consensus=b3,
        weight_tracker=float(g1),
        weight_estimate=float(g2),
        weight_consensus=float(g3),
        drift_total=sigma,
        contraction=0.0,
        sizes=tuple(sizes),
        uv=uv,
    )
    return alpha, certs.with_alpha(alpha)


# --- Lyapunov function and audit --------------------------------------------


def lyapunov_value(errors: ErrorDecomposition, certs: CertificateSet) -> dict[str, float]:
    """The four weighted quadratic forms and their combination."""
    v_avg = float(np.sum(certs.W_average * errors.average**2))
    v_tr = float(sum(np.sum(E * (W @ E)) for E, W in zip(errors.tracker, certs.W_push)))
    e = errors.estimate.reshape(-1)
    v_est = float(e @ certs.W_estimator @ e)
    offsets = np.cumsum((0,) + certs.sizes)
    v_cons = float(
        sum(
            errors.consensus[a:b] @ W @ errors.consensus[a:b]
            for a, b, W in zip(offsets[:-1], offsets[1:], certs.W_pull)
        )
    )
    total = v_avg + certs.weight_tracker * v_tr + certs.weight_estimate * v_est + certs.weight_consensus * v_cons
    return {"average": v_avg, "tracker": v_tr, "estimate": v_est, "consensus": v_cons, "total": total}


@dataclass
class AuditReport:
    alpha: float
    certified: bool
    contraction: float
    V: list[float]
    violations: dict[str, list[int]]

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def first_violation(self) -> tuple[str, int] | None:
        hits = [(ks[0], name) for name, ks in self.violations.items() if ks]
        if not hits:
            return None
        k, name = min(hits)
        return name, k

    def to_dict(self) -> dict:
        first = self.first_violation()
        return {
            "alpha": self.alpha,
            "certified": self.certified,
            "ok": self.ok,
            "contraction": self.contraction,
            "steps": max(len(self.V) - 1, 0),
            "violations": {k: len(v) for k, v in self.violations.items()},
            "first_violation": None if first is None else {"check": first[0], "k": first[1]},
            "V_first": self.V[0] if self.V else None,
            "V_last": self.V[-1] if self.V else None,
        }


def _exceeds(lhs: float, rhs: float, magnitude: float, floor: float) -> bool:
    return lhs > rhs + AUDIT_RTOL * magnitude + floor


def _noise_floor(states: Sequence[SwarmState], certs: CertificateSet) -> float:
    # Errors are only resolved to about n * eps * |state|; quadratic forms below
    # the square of that, times the largest weight, are round-off.
    scale = max(max(float(np.max(np.abs(s.x))), float(np.max(np.abs(s.estimate)))) for s in states)
    resolution = 16 * np.finfo(float).eps * max(1.0, scale) * certs.lipschitz.size
    weight = max(
        float(np.max(certs.W_average)),
        max(norm2(W) for W in certs.W_push),
        max(norm2(W) for W in certs.W_pull),
        norm2(certs.W_estimator),
        1.0,
    )
    return resolution**2 * weight * certs.lipschitz.size


def lyapunov_audit(
    states: Sequence[SwarmState] | TrajectoryLog,
    weights: IntraCoalitionWeights,
    certs: CertificateSet,
    y_star: Sequence[float],
) -> AuditReport:
    """Recheck, step by step, the four per-block inequalities and the overall decrease.

    ``states`` must be consecutive rounds (record the run with
    ``record_states=True`` and decimation 1). The checks are:

    * ``tracker``:   dV_tr   <= -|e_tr|^2/2 + c_te |e_est|^2 + c_tc |e_cons|^2
    * ``average``:   dV_avg  <= -l |e_avg|^2 + c_at |e_tr|^2 + c_ae |e_est|^2 + alpha max b1 * S
    * ``estimate``:  dV_est  <= -|e_est|^2/2 + c_ec |e_cons|^2 + alpha^2 max b2 * S
    * ``consensus``: dV_cons <= -|e_cons|^2/2 + alpha^2 max b3 * S
    * ``decrease``:  V(k+1) <= (1 - contraction) V(k)

    with ``S = |e_tr|^2 + |e_est|^2 + N |e_avg|^2``. The decrease check only
    carries a guarantee when ``certs.certified``; it is evaluated regardless.
    """
    if isinstance(states, TrajectoryLog):
        if not states.states:
            raise ValueError("trajectory has no state snapshots; run with record_states=True")
        states = states.states
    states = list(states)
    if len(states) < 2:
        raise ValueError("need at least two consecutive states")
    for a, b in zip(states, states[1:]):
        if b.k != a.k + 1:
            raise ValueError(f"snapshots are not consecutive (k={a.k} then k={b.k})")
    alpha = certs.alpha
    N = len(certs.sizes)
    floor = _noise_floor(states, certs)
    errs = [compute_errors(s, weights, y_star) for s in states]
    vals = [lyapunov_value(e, certs) for e in errs]
    violations: dict[str, list[int]] = {k: [] for k in ("tracker", "average", "estimate", "consensus", "decrease")}
    b1, b2, b3 = np.max(certs.drift_average), np.max(certs.drift_estimate), np.max(certs.drift_consensus)
    for k in range(len(states) - 1):
        e, v0, v1 = errs[k], vals[k], vals[k + 1]
        tr2, av2, co2, es2 = e.tracker_norm**2, e.average_norm**2, e.consensus_norm**2, e.estimate_norm**2
        S = tr2 + es2 + N * av2
        checks = {
            "tracker": (
                v1["tracker"] - v0["tracker"],
                -0.5 * tr2 + certs.coupling_tracker_estimate * es2 + certs.coupling_tracker_consensus * co2,
                v0["tracker"] + v1["tracker"],
            ),
            "average": (
                v1["average"] - v0["average"],
                -certs.monotonicity * av2
                + certs.coupling_average_tracker * tr2
                + certs.coupling_average_estimate * es2
                + alpha * b1 * S,
                v0["average"] + v1["average"],
            ),
            "estimate": (
                v1["estimate"] - v0["estimate"],
                -0.5 * es2 + certs.coupling_estimate_consensus * co2 + alpha**2 * b2 * S,
                v0["estimate"] + v1["estimate"],
            ),
            "consensus": (
                v1["consensus"] - v0["consensus"],
                -0.5 * co2 + alpha**2 * b3 * S,
                v0["consensus"] + v1["consensus"],
            ),
            "decrease": (
                v1["total"],
                (1.0 - certs.contraction) * v0["total"],
                v0["total"],
            ),
        }
        for name, (lhs, rhs, mag) in checks.items():
            if _exceeds(lhs, rhs, mag, floor):
                violations[name].append(states[k].k)
    return AuditReport(alpha, certs.certified, certs.contraction, [v["total"] for v in vals], violations)


# --- empirical rate ---------------------------------------------------------


@dataclass(frozen=True)
class RateEstimate:
    rho: float
    r_squared: float
    points: int
    at_floor: bool


def estimate_linear_rate(
    trajectory: TrajectoryLog | np.ndarray,
    x_star: Sequence[float] | None = None,
    *,
    floor: float = 1e-12,
    min_points: int = 50,
) -> RateEstimate:
    """Fit ``log|x(k) - x*|`` against ``k`` over the tail half of the usable rows.

    ``trajectory`` is either a log (uses its recorded ``k`` and ``x``), an array
    of states (one per round), or a 1-D array of error norms when ``x_star`` is
    None. Rows whose error is below ``floor * max(1, |x*|)`` are at the
    floating-point floor and are dropped, along with everything after them.
    """
    if isinstance(trajectory, TrajectoryLog):
        ks = np.asarray(trajectory.k, dtype=float)
        errs = np.linalg.norm(trajectory.x_array() - np.asarray(x_star, dtype=float), axis=1)
        scale = max(1.0, float(np.linalg.norm(x_star)))
    else:
        arr = np.asarray(trajectory, dtype=float)
        if x_star is None:
            errs = arr
            scale = 1.0
        else:
            errs = np.linalg.norm(arr - np.asarray(x_star, dtype=float), axis=1)
            scale = max(1.0, float(np.linalg.norm(x_star)))
        ks = np.arange(errs.size, dtype=float)
    below = np.flatnonzero(errs <= floor * scale)
    usable = errs.size if below.size == 0 else int(below[0])
    at_floor = usable < min_points
    if usable < 3:
        return RateEstimate(float("nan"), float("nan"), usable, True)
    ks, logs = ks[:usable], np.log(errs[:usable])
    half = usable // 2
    ks, logs = ks[half:], logs[half:]
    slope, intercept = np.polyfit(ks, logs, 1)
    fit = slope * ks + intercept
    ss_res = float(np.sum((logs - fit) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateEstimate(float(np.exp(slope)), r2, int(ks.size), at_floor)
