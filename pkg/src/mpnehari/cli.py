"""Command-line interface: ``mpnehari <command> <config> [options]``.

Exit codes: 0 success, 1 a check failed (hardy), 2 configuration error,
3 hypothesis failure, 4 solver failure.

Outputs go to ``--output``, else ``[run] output``, else ``$MPNEHARI_OUTPUT_DIR``,
else ``./mpnehari-out``. Every command writes ``manifest.txt`` there.
"""

from __future__ import annotations

import argparse
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__, kernels
from .config import ConfigError, RunConfig, load_config
from .energy import hardy_check_lower, hardy_check_upper
from .exprlang import EvalError, ExprSyntaxError, UnknownIdentifier, parse
from .fields import random_fields
from .grid import EmptyDomain
from .nehari import (
    N_SCAN, T_SPAN, TOL_CLASS, TOL_ROOT, NoRoot, ZeroDirection, lambda_bounds, project_to_nehari,
)
from .solver import BranchVanished, DistinctnessFailure, lambda_sweep, solve_two
from .spaces import TOL_LUX, DimensionMismatch, estimate_embedding_constants, validate

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_SOLVER = 0, 1, 2, 3, 4
OUTPUT_ENV = "MPNEHARI_OUTPUT_DIR"
HARDY_HEADER = "field,lhs_upper,rhs_upper,pass_upper,lhs_lower,rhs_lower,pass_lower,norm_case"


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _output_dir(args, cfg: RunConfig) -> Path:
    out = args.output or cfg.output or os.environ.get(OUTPUT_ENV) or "mpnehari-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, cfg: RunConfig, command: list) -> None:
    lines = [
        f"mpnehari_version={__version__}",
        f"kernel_backend={kernels.BACKEND}",
        f"numpy_version={np.__version__}",
        f"command={' '.join(command)}",
        f"seed={cfg.seed}",
        f"tol_lux={TOL_LUX!r}", f"tol_root={TOL_ROOT!r}", f"tol_class={TOL_CLASS!r}",
        f"t_span={T_SPAN[0]!r},{T_SPAN[1]!r}", f"n_scan={N_SCAN}",
    ]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n" + cfg.echo())


def _emit(text: str, path: Path) -> None:
    path.write_text(text)
    sys.stdout.write(text)


def _require_hypotheses(es):
    report = validate(es)
    if not report.ok:
        raise _Fail(EXIT_HYPOTHESIS, "hypotheses fail: " + ", ".join(report.failed))
    return report


def cmd_validate(args, cfg: RunConfig, out: Path) -> int:
    es = cfg.exponent_set()
    report = validate(es)
    text = report.to_keyvalue() + lambda_bounds(es).to_keyvalue()
    _emit(text, out / "validate.txt")
    return EXIT_OK if report.ok else EXIT_HYPOTHESIS


def cmd_fibering(args, cfg: RunConfig, out: Path) -> int:
    es = cfg.exponent_set()
    _require_hypotheses(es)
    lam = args.lam if args.lam is not None else cfg.lam
    if lam is None:
        raise ConfigError("run.lambda", "needed (or pass --lambda)")
    u = cfg.grid().evaluate(parse(args.direction, cfg.dim))
    try:
        res = project_to_nehari(u, es, lam, cfg.solver.reg)
    except NoRoot as exc:
        if exc.scan is not None:
            exc.scan.to_csv(out / "fibering.csv")
        raise _Fail(EXIT_SOLVER, str(exc)) from None
    except ZeroDirection as exc:
        raise _Fail(EXIT_SOLVER, str(exc)) from None
    rows = ["t,phi,phi1", f"{0.0!r},{0.0!r},"]
    rows += [f"{t!r},{p!r},{d!r}" for t, p, d in
             zip(map(float, res.scan.t), map(float, res.scan.phi), map(float, res.scan.phi1))]
    (out / "fibering.csv").write_text("\n".join(rows) + "\n")
    _emit(f"lambda={float(lam)!r}\n" + res.to_keyvalue(), out / "roots.txt")
    return EXIT_OK


def cmd_solve(args, cfg: RunConfig, out: Path) -> int:
    es = cfg.exponent_set()
    _require_hypotheses(es)
    lam = args.lam if args.lam is not None else cfg.lam
    if lam is None:
        raise ConfigError("run.lambda", "needed (or pass --lambda)")
    try:
        report = solve_two(es, lam, cfg.solver)
    except (BranchVanished, DistinctnessFailure) as exc:
        raise _Fail(EXIT_SOLVER, str(exc)) from None
    report.write(out, cfg.grid())
    sys.stdout.write(report.to_keyvalue())
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig, out: Path) -> int:
    es = cfg.exponent_set()
    _require_hypotheses(es)
    lambdas = args.lambdas if args.lambdas is not None else cfg.lambdas
    try:
        result = lambda_sweep(es, lambdas, cfg.solver)
    except ValueError as exc:
        raise ConfigError("run.lambdas", str(exc)) from None
    (out / "sweep.csv").write_text(result.to_csv())
    _emit(result.to_csv() + result.summary(), out / "sweep_summary.txt")
    return EXIT_OK


def cmd_hardy(args, cfg: RunConfig, out: Path) -> int:
    es = cfg.exponent_set()
    _require_hypotheses(es)
    grid = cfg.grid()
    est = estimate_embedding_constants(
        grid, es, random_fields(grid, args.estimator, seed=cfg.seed + 1, amplitude=(1e-2, 1e2)))
    rows = [HARDY_HEADER]
    ok = 0
    for k, u in enumerate(random_fields(grid, args.battery, seed=cfg.seed, amplitude=(1e-2, 1e2))):
        up = hardy_check_upper(u, es, est["c_hat_M"], cfg.solver.reg)
        lo = hardy_check_lower(u, es, cfg.solver.reg)
        ok += up.passed and lo.passed
        rows.append(f"{k},{up.lhs!r},{up.rhs!r},{str(up.passed).lower()},"
                    f"{lo.lhs!r},{lo.rhs!r},{str(lo.passed).lower()},{lo.details['case']}")
    (out / "hardy.csv").write_text("\n".join(rows) + "\n")
    summary = [f"{k}={v!r}" for k, v in est.items()]
    summary += [f"battery={args.battery}", f"passed={ok}", f"failed={args.battery - ok}"]
    _emit("\n".join(summary) + "\n", out / "hardy_summary.txt")
    return EXIT_OK if ok == args.battery else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpnehari", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("--output", "-o", help=f"output directory (default: ${OUTPUT_ENV})")
        p.set_defaults(func=func)
        return p

    add("validate", cmd_validate, "check the hypotheses and print the lambda thresholds")
    p = add("fibering", cmd_fibering, "fibering map and Nehari roots along one direction")
    p.add_argument("--direction", required=True, help="expression for the direction field")
    p.add_argument("--lambda", dest="lam", type=float)
    p = add("solve", cmd_solve, "minimise on both Nehari branches")
    p.add_argument("--lambda", dest="lam", type=float)
    p = add("sweep", cmd_sweep, "solve over a list of lambda values")
    p.add_argument("--lambdas", type=lambda s: [float(v) for v in s.split(",") if v.strip()])
    p = add("hardy", cmd_hardy, "Hardy-type inequality checks on random fields")
    p.add_argument("--battery", type=int, default=100)
    p.add_argument("--estimator", type=int, default=40, help="fields used to estimate the embedding constant")
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = _output_dir(args, cfg)
        _write_manifest(out, cfg, ["mpnehari"] + argv)
        return args.func(args, cfg, out)
    except (ConfigError, ExprSyntaxError, UnknownIdentifier, EvalError, EmptyDomain,
            DimensionMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _Fail as exc:
        label = "hypothesis failure" if exc.code == EXIT_HYPOTHESIS else "solver failure"
        print(f"{label}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
