"""Command-line scenario runner.

Exit codes:

    0  success (valid / converged / certified)
    2  invalid scenario, bad arguments or unwritable output
    3  iteration cap reached before the stopping rule held
    4  divergence
    5  a contraction certificate failed (matrix named on stderr)
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, oracle
from .errors import AssumptionError, CertificateError, ConfigError, ConvergenceError, DivergenceError, NeLabError
from .reports import dumps, write_csv, write_json, write_svg
from .scenario import Scenario, load_scenario
from .seeker import SeekerConfig, intra_spread, run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_MAX_ITER = 3
EXIT_DIVERGED = 4
EXIT_CERTIFICATE = 5
_VERDICT_EXIT = {"converged": EXIT_OK, "max_iterations": EXIT_MAX_ITER, "diverged": EXIT_DIVERGED}


def _err(msg: str) -> None:
    print(f"ne-lab: {msg}", file=sys.stderr)


def _alpha_arg(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive number or 'auto'") from None
    if not np.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError("step size must be positive")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


# --- validate ---------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID
    print(
        f"{sc.name}: valid ({sc.layout.n_coalitions} coalitions, {sc.layout.n_sum} agents, "
        f"{len(sc.graph.edges)} edges; G and every G_i strongly connected; weights stochastic)"
    )
    return EXIT_OK


# --- run --------------------------------------------------------------------


def _equilibrium(sc: Scenario):
    if sc.game.is_quadratic:
        return oracle.solve_ne_quadratic(sc.game)
    return oracle.solve_ne_fixed_point(sc.game)


def _certificates(sc: Scenario):
    try:
        return analysis.safe_step_size(sc.game, sc.graph, sc.weights)[1], None
    except (CertificateError, AssumptionError) as exc:
        return None, str(exc)


def execute(sc: Scenario, *, alpha=None, iters=None, use_oracle=True, audit=False, out_dir=".", overrides=None) -> tuple[int, dict]:
    """Run one scenario and write its artifacts; returns ``(exit code, summary)``."""
    overrides = overrides or {}
    out = Path(out_dir)
    paths = {}
    for key in ("csv", "json", "svg"):
        p = overrides.get(key) or getattr(sc.outputs, key)
        paths[key] = p if Path(p).is_absolute() else out / p
    try:
        out.mkdir(parents=True, exist_ok=True)
        for p in paths.values():
            Path(p).parent.mkdir(parents=True, exist_ok=True)
            with open(p, "a", encoding="utf-8"):
                pass
    except OSError as exc:
        _err(f"cannot write outputs: {exc}")
        return EXIT_INVALID, {}

    cfg = sc.seeker
    config = SeekerConfig(
        alpha=cfg.alpha if alpha is None else alpha,
        max_iterations=cfg.max_iterations if iters is None else iters,
        stop_tolerance=cfg.stop_tolerance,
        mode=cfg.mode,
        record_states=audit,
        decimation=1 if audit else cfg.decimation,
    )

    eq, oracle_note = None, None
    if use_oracle:
        try:
            eq = _equilibrium(sc)
        except (AssumptionError, ConvergenceError, DivergenceError) as exc:
            oracle_note = str(exc)
    certs, cert_note = (None, None)
    if eq is not None or config.alpha == "auto":
        certs, cert_note = _certificates(sc)
    if config.alpha == "auto" and certs is None:
        _err(f"cannot derive a certified step size: {cert_note}")
        return EXIT_CERTIFICATE, {}

    y_star = None if eq is None else eq.y_star
    log = run(config, sc.game, sc.graph, sc.weights, sc.x0, sc.estimate0, y_star=y_star, certificates=certs)
    alpha_used = log.alpha
    if certs is not None:
        certs = certs.with_alpha(alpha_used)

    final_x = log.x[-1]
    summary = {
        "scenario": sc.name,
        "source": sc.source,
        "config_hash": sc.config_hash,
        "alpha": alpha_used,
        "alpha_source": "auto" if config.alpha == "auto" else "manual",
        "certified_step": None if certs is None else bool(certs.certified),
        "safe_alpha": None if certs is None else certs.alpha_bound,
        "verdict": log.verdict,
        "message": log.message,
        "iterations": log.iterations,
        "rows": len(log.k),
        "final_x": final_x,
        "final_spread": intra_spread(sc.layout, final_x) if np.all(np.isfinite(final_x)) else None,
        "oracle": None if eq is None else eq.to_dict(),
    }
    if oracle_note:
        summary["oracle_error"] = oracle_note
    if cert_note:
        summary["certificate_error"] = cert_note
    if eq is not None and log.verdict != "diverged":
        summary["distance_to_equilibrium"] = float(np.max(np.abs(final_x - eq.x_star)))
        report = oracle.verify_ne(sc.game, final_x, 1e-4)
        summary["verification"] = report.to_dict()
        rate = analysis.estimate_linear_rate(log, eq.x_star)
        summary["rate"] = {"rho": rate.rho, "r_squared": rate.r_squared, "points": rate.points, "at_floor": rate.at_floor}
    if audit and certs is not None and eq is not None and len(log.states) >= 2:
        summary["audit"] = analysis.lyapunov_audit(log, sc.weights, certs, eq.y_star).to_dict()
    summary["outputs"] = {k: str(v) for k, v in paths.items()}

    metadata = {
        "scenario": sc.name,
        "config_hash": sc.config_hash,
        "alpha": alpha_used,
        "verdict": log.verdict,
        "iterations": log.iterations,
        "oracle_y_star": None if eq is None else [float(v) for v in eq.y_star],
    }
    labels = sc.layout.labels()
    try:
        write_csv(paths["csv"], log, labels, metadata)
        write_json(paths["json"], summary)
        refs = [] if eq is None else list(eq.y_star)
        write_svg(paths["svg"], log, labels, refs, metadata, title=f"{sc.name}: agent states (alpha = {alpha_used:g})")
    except OSError as exc:
        _err(f"cannot write outputs: {exc}")
        return EXIT_INVALID, summary
    return _VERDICT_EXIT[log.verdict], summary


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID
    overrides = {"csv": args.csv, "json": args.json, "svg": args.svg}
    code, summary = execute(
        sc, alpha=args.alpha, iters=args.iters, use_oracle=args.oracle, audit=args.audit, out_dir=args.out_dir, overrides=overrides
    )
    if summary:
        line = f"{sc.name}: {summary['verdict']} after {summary['iterations']} iterations (alpha = {summary['alpha']:g})"
        if "distance_to_equilibrium" in summary:
            line += f", |x - x*|_inf = {summary['distance_to_equilibrium']:.3g}"
        print(line)
        if summary["verdict"] == "diverged":
            _err(summary["message"])
    return code


# --- certify ----------------------------------------------------------------


def certificate_report(sc: Scenario) -> dict:
    """Raises CertificateError or AssumptionError when a certificate fails.

    Weight tables that failed validation reach here unchecked, so the error
    names the broken matrix rather than the config field.
    """
    alpha, certs = analysis.safe_step_size(sc.game, sc.graph, sc.weights)
    report = certs.to_dict()
    report["scenario"] = sc.name
    report["config_hash"] = sc.config_hash
    report["estimated_constants"] = not sc.game.is_quadratic
    report["ok"] = True
    if sc.seeker.alpha != "auto":
        report["scenario_alpha"] = sc.seeker.alpha
        report["scenario_alpha_certified"] = bool(sc.seeker.alpha <= alpha)
    return report


def cmd_certify(args) -> int:
    try:
        sc = load_scenario(args.scenario, strict=False)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID
    try:
        report = certificate_report(sc)
    except CertificateError as exc:
        _err(f"certificate failed for {exc.matrix}: {exc}")
        print(dumps({"scenario": sc.name, "ok": False, "failed_matrix": exc.matrix, "reason": str(exc)}), end="")
        return EXIT_CERTIFICATE
    except AssumptionError as exc:
        _err(f"certificate failed: {exc}")
        print(dumps({"scenario": sc.name, "ok": False, "failed_matrix": None, "reason": str(exc)}), end="")
        return EXIT_CERTIFICATE
    text = dumps(report)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            _err(f"cannot write {args.out}: {exc}")
            return EXIT_INVALID
    print(text, end="")
    return EXIT_OK


# --- batch ------------------------------------------------------------------


def _batch_one(path: str, out_root: str, audit: bool) -> tuple[str, int, str]:
    try:
        sc = load_scenario(path)
    except ConfigError as exc:
        return path, EXIT_INVALID, str(exc)
    code, summary = execute(sc, audit=audit, out_dir=str(Path(out_root) / Path(path).stem))
    return path, code, summary.get("verdict", "error")


def batch_workers() -> int:
    cap = os.environ.get("NE_LAB_THREADS")
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            _err(f"ignoring NE_LAB_THREADS={cap!r} (not an integer)")
    return os.cpu_count() or 1


def cmd_batch(args) -> int:
    root = Path(args.directory)
    if not root.is_dir():
        _err(f"{root}: not a directory")
        return EXIT_INVALID
    files = sorted(str(p) for p in root.glob("*.toml"))
    if not files:
        _err(f"{root}: no .toml scenarios")
        return EXIT_INVALID
    out_root = args.out_dir or str(root / "out")
    workers = min(batch_workers(), len(files))
    if workers == 1:
        results = [_batch_one(f, out_root, args.audit) for f in files]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_one, files, [out_root] * len(files), [args.audit] * len(files)))
    worst = EXIT_OK
    for path, code, note in results:
        print(f"{path}: exit {code} ({note})")
        worst = max(worst, code)
    return worst


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ne-lab", description="Distributed Nash equilibrium seeking for multi-coalition games.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file (connectivity, weights, costs)")
    p.add_argument("scenario", help="scenario file or built-in name (e.g. paper-sim)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run the seeker and write CSV, JSON and SVG outputs")
    p.add_argument("scenario")
    p.add_argument("--alpha", type=_alpha_arg, help="step size, or 'auto' for the certified bound")
    p.add_argument("--iters", type=_positive_int, help="iteration cap")
    p.add_argument("--oracle", dest="oracle", action="store_true", default=True, help="compute the equilibrium (default)")
    p.add_argument("--no-oracle", dest="oracle", action="store_false")
    p.add_argument("--audit", action="store_true", help="keep full states and audit the Lyapunov decrease")
    p.add_argument("--out-dir", default=".", help="directory for relative output paths")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="print the certified step size and every constant behind it")
    p.add_argument("scenario")
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("batch", help="run every *.toml in a directory concurrently")
    p.add_argument("directory")
    p.add_argument("--out-dir", help="output root (default: <directory>/out)")
    p.add_argument("--audit", action="store_true")
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except NeLabError as exc:
        _err(str(exc))
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
