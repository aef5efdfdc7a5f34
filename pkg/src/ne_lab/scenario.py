"""Scenario files: TOML in, validated game/graph/weights/seeker objects out.

Schema (every key optional unless marked)::

    name = "paper-sim"
    description = "..."

    [layout]
    sizes = [3, 4, 3]                      # required

    [graph]
    edges = ["1.1 -> 1.2", ...]            # required, "sender -> receiver"

    [weights]
    kind = "uniform"                       # or "explicit"
    pull = [[[...]], ...]                  # explicit only: one row-stochastic table per coalition
    push = [[[...]], ...]                  # explicit only: one column-stochastic table per coalition

    [costs]
    quadratic = [[m, s, h], ...]           # one triple per agent, in flat order
    builtin = "paper-sim"                  # alternative to quadratic

    [seeker]
    alpha = 0.02                           # or "auto"
    max_iterations = 100000
    stop_tolerance = 1e-8
    mode = "general"

    [init]
    x0 = [...]                             # or "random"
    xi0 = "expand-x0"                      # or "random", or an n_sum x n_sum table
    seed = 0
    box = [-10.0, 10.0]                    # range for "random"

    [outputs]
    csv = "trajectory.csv"
    json = "summary.json"
    svg = "trajectory.svg"
    decimation = 1

Unknown keys are rejected so that typos surface instead of silently using defaults.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ConnectivityError, GraphError, NeLabError, WeightError
from .game import GameSpec, paper_costs
from .seeker import MODES, SeekerConfig
from .topology import (
    CoalitionLayout,
    DirectedGameGraph,
    IntraCoalitionWeights,
    build_graph,
    check_connectivity,
    explicit_weights,
    uniform_weights,
    unchecked_weights,
    weight_violations,
)

PAPER_SIZES = (3, 4, 3)
PAPER_M = (10, 12, 14, 16, 22, 18, 20, 26, 30, 12)
PAPER_S = (10, 10, 10, 50, 50, 50, 50, 20, 20, 20)
PAPER_H = (0.25, 0.25, 0.25, 0.15, 0.15, 0.15, 0.15, 0.1, 0.1, 0.1)

_SCHEMA: dict[str, set[str] | None] = {
    "name": None,
    "description": None,
    "layout": {"sizes"},
    "graph": {"edges"},
    "weights": {"kind", "pull", "push"},
    "costs": {"quadratic", "builtin"},
    "seeker": {"alpha", "max_iterations", "stop_tolerance", "mode"},
    "init": {"x0", "xi0", "seed", "box"},
    "outputs": {"csv", "json", "svg", "decimation"},
}
BUILTIN_COSTS = ("paper-sim",)


@dataclass(frozen=True)
class OutputPaths:
    csv: str | None
    json: str | None
    svg: str | None
    decimation: int = 1


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    source: str
    config_hash: str
    layout: CoalitionLayout
    graph: DirectedGameGraph
    weights: IntraCoalitionWeights
    game: GameSpec
    seeker: SeekerConfig
    x0: np.ndarray
    estimate0: np.ndarray
    outputs: OutputPaths
    weight_problems: tuple[str, ...] = field(default=())


# --- locating scenarios -----------------------------------------------------


def builtin_names() -> list[str]:
    root = resources.files("ne_lab") / "scenarios"
    return sorted(p.name[: -len(".toml")] for p in root.iterdir() if p.name.endswith(".toml"))


def read_scenario_text(ref: str | Path) -> tuple[str, str]:
    """Return ``(text, source)`` for a file path or the name of a shipped scenario."""
    path = Path(ref)
    if path.is_file():
        try:
            return path.read_text(encoding="utf-8"), str(path)
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read file: {exc}", str(path)) from exc
    name = str(ref)
    if name in builtin_names():
        res = resources.files("ne_lab") / "scenarios" / f"{name}.toml"
        return res.read_text(encoding="utf-8"), f"builtin:{name}"
    raise ConfigError(f"no such file and no built-in scenario of that name (built-ins: {', '.join(builtin_names())})", name)


# --- field helpers ----------------------------------------------------------


def _check_keys(doc: dict) -> None:
    for key, value in doc.items():
        if key not in _SCHEMA:
            raise ConfigError("unknown key", key)
        allowed = _SCHEMA[key]
        if allowed is None:
            if not isinstance(value, str):
                raise ConfigError("must be a string", key)
            continue
        if not isinstance(value, dict):
            raise ConfigError("must be a table", key)
        for sub in value:
            if sub not in allowed:
                raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", f"{key}.{sub}")


def _number(value: Any, where: str, *, integer: bool = False, positive: bool = False) -> float | int:
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        raise ConfigError("must be an integer" if integer else "must be a number", where)
    if not np.isfinite(value):
        raise ConfigError("must be finite", where)
    if positive and value <= 0:
        raise ConfigError("must be positive", where)
    return value


def _vector(value: Any, n: int, where: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != n:
        raise ConfigError(f"must be a list of {n} numbers", where)
    return np.array([_number(v, f"{where}[{k}]") for k, v in enumerate(value)], dtype=float)


def _matrix(value: Any, rows: int, cols: int, where: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != rows:
        raise ConfigError(f"must be a {rows}x{cols} table (list of {rows} rows)", where)
    return np.vstack([_vector(r, cols, f"{where}[{k}]") for k, r in enumerate(value)])


def config_hash(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# --- sections ---------------------------------------------------------------


def _layout(doc: dict) -> CoalitionLayout:
    sec = doc.get("layout")
    if sec is None or "sizes" not in sec:
        raise ConfigError("required", "layout.sizes")
    sizes = sec["sizes"]
    if not isinstance(sizes, list) or not sizes:
        raise ConfigError("must be a non-empty list of positive integers", "layout.sizes")
    for k, s in enumerate(sizes):
        _number(s, f"layout.sizes[{k}]", integer=True, positive=True)
    try:
        return CoalitionLayout(tuple(sizes))
    except ValueError as exc:
        raise ConfigError(str(exc), "layout.sizes") from exc


def _graph(doc: dict, layout: CoalitionLayout) -> DirectedGameGraph:
    sec = doc.get("graph")
    if sec is None or "edges" not in sec:
        raise ConfigError("required", "graph.edges")
    edges = sec["edges"]
    if not isinstance(edges, list) or not all(isinstance(e, str) for e in edges):
        raise ConfigError('must be a list of strings like "1.1 -> 1.2"', "graph.edges")
    try:
        return build_graph(layout, edges)
    except GraphError as exc:
        raise ConfigError(str(exc), "graph.edges") from exc


def _weights(doc: dict, graph: DirectedGameGraph, strict: bool) -> tuple[IntraCoalitionWeights, tuple[str, ...]]:
    sec = doc.get("weights", {})
    kind = sec.get("kind", "uniform")
    report = check_connectivity(graph)
    if not report.ok:
        raise ConfigError(report.message, "graph.edges")
    if kind == "uniform":
        if "pull" in sec or "push" in sec:
            raise ConfigError("tables are only allowed with kind = \"explicit\"", "weights")
        return uniform_weights(graph), ()
    if kind != "explicit":
        raise ConfigError('must be "uniform" or "explicit"', "weights.kind")
    layout = graph.layout
    tables = {}
    for key in ("pull", "push"):
        value = sec.get(key)
        if not isinstance(value, list) or len(value) != layout.n_coalitions:
            raise ConfigError(f"must list one table per coalition ({layout.n_coalitions})", f"weights.{key}")
        tables[key] = [
            _matrix(t, n, n, f"weights.{key}[{i}]") for i, (t, n) in enumerate(zip(value, layout.sizes))
        ]
    problems = tuple(weight_violations(graph, tables["pull"], tables["push"]))
    if problems:
        if strict:
            raise ConfigError("; ".join(problems), "weights")
        return unchecked_weights(tables["pull"], tables["push"]), problems
    try:
        return explicit_weights(graph, tables["pull"], tables["push"]), ()
    except (WeightError, ConnectivityError) as exc:
        raise ConfigError(str(exc), "weights") from exc


def _costs(doc: dict, layout: CoalitionLayout) -> GameSpec:
    sec = doc.get("costs")
    if not sec:
        raise ConfigError("required (quadratic triples or builtin)", "costs")
    if "quadratic" in sec and "builtin" in sec:
        raise ConfigError("give either quadratic or builtin, not both", "costs")
    if "builtin" in sec:
        name = sec["builtin"]
        if name not in BUILTIN_COSTS:
            raise ConfigError(f"unknown builtin (known: {', '.join(BUILTIN_COSTS)})", "costs.builtin")
        if layout.sizes != PAPER_SIZES:
            raise ConfigError(f"builtin {name!r} needs layout.sizes = {list(PAPER_SIZES)}", "costs.builtin")
        return paper_costs(layout, PAPER_M, PAPER_S, PAPER_H)
    triples = _matrix(sec["quadratic"], layout.n_sum, 3, "costs.quadratic")
    for a, (m, _, _) in enumerate(triples):
        if m <= 0:
            raise ConfigError("m must be positive", f"costs.quadratic[{a}]")
    return paper_costs(layout, triples[:, 0], triples[:, 1], triples[:, 2])


def _seeker(doc: dict, decimation: int) -> SeekerConfig:
    sec = doc.get("seeker", {})
    alpha = sec.get("alpha", 0.02)
    if alpha != "auto":
        alpha = float(_number(alpha, "seeker.alpha", positive=True))
    iters = _number(sec.get("max_iterations", 100_000), "seeker.max_iterations", integer=True, positive=True)
    tol = float(_number(sec.get("stop_tolerance", 1e-8), "seeker.stop_tolerance", positive=True))
    mode = sec.get("mode", "general")
    if mode not in MODES:
        raise ConfigError(f"must be one of {', '.join(MODES)}", "seeker.mode")
    return SeekerConfig(alpha=alpha, max_iterations=int(iters), stop_tolerance=tol, mode=mode, decimation=decimation)


def _init(doc: dict, layout: CoalitionLayout) -> tuple[np.ndarray, np.ndarray]:
    sec = doc.get("init", {})
    n = layout.n_sum
    seed = _number(sec.get("seed", 0), "init.seed", integer=True)
    box = sec.get("box", [-10.0, 10.0])
    lo, hi = _vector(box, 2, "init.box")
    if not lo < hi:
        raise ConfigError("lower bound must be below upper bound", "init.box")
    rng = np.random.default_rng(seed)
    x0 = sec.get("x0", [0.0] * n)
    x0 = rng.uniform(lo, hi, n) if x0 == "random" else _vector(x0, n, "init.x0")
    xi0 = sec.get("xi0", "expand-x0")
    if xi0 == "expand-x0":
        est = np.tile(x0, (n, 1))
    elif xi0 == "random":
        est = rng.uniform(lo, hi, (n, n))
    else:
        est = _matrix(xi0, n, n, "init.xi0")
    return x0, est


def _outputs(doc: dict, name: str) -> OutputPaths:
    sec = doc.get("outputs", {})
    paths = {}
    for key in ("csv", "json", "svg"):
        value = sec.get(key, f"{name}.{key}")
        if not isinstance(value, str) or not value:
            raise ConfigError("must be a non-empty path string", f"outputs.{key}")
        paths[key] = value
    dec = _number(sec.get("decimation", 1), "outputs.decimation", integer=True, positive=True)
    return OutputPaths(decimation=int(dec), **paths)


# --- entry points -----------------------------------------------------------


def parse_scenario(text: str, source: str = "<string>", *, strict: bool = True) -> Scenario:
    """Parse and validate scenario text.

    With ``strict=False`` explicit weight tables that break the stochasticity
    or support rules are kept (unvalidated) and listed in ``weight_problems``,
    so that certificate diagnostics can name the failing matrix.

    Raises:
        ConfigError: with ``location`` naming the offending field.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}", source) from exc
    _check_keys(doc)
    default_name = Path(source.removeprefix("builtin:")).stem or "scenario"
    name = doc.get("name", default_name)
    layout = _layout(doc)
    graph = _graph(doc, layout)
    weights, problems = _weights(doc, graph, strict)
    game = _costs(doc, layout)
    outputs = _outputs(doc, name)
    seeker = _seeker(doc, outputs.decimation)
    x0, est0 = _init(doc, layout)
    return Scenario(
        name=name,
        description=doc.get("description", ""),
        source=source,
        config_hash=config_hash(doc),
        layout=layout,
        graph=graph,
        weights=weights,
        game=game,
        seeker=seeker,
        x0=x0,
        estimate0=est0,
        outputs=outputs,
        weight_problems=problems,
    )


def load_scenario(ref: str | Path, *, strict: bool = True) -> Scenario:
    text, source = read_scenario_text(ref)
    try:
        return parse_scenario(text, source, strict=strict)
    except ConfigError:
        raise
    except NeLabError as exc:
        raise ConfigError(str(exc), source) from exc
