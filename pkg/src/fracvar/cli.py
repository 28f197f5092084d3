"""Command-line front end: solve problems, check candidates, apply operators.

Commands
    solve  --problem P --out DIR [--set key=value ...]
    check  --problem P --candidate C.csv [--out DIR] [--set key=value ...]
    ops    --candidate IN.csv --operator NAME --alpha X --out DIR

Exit codes are exactly 0 (converged / all residuals below tolerance),
2 (non-converged solve or failed check) and 1 (any error).  CSV files
carry a header row, '.' decimal separator and LF line terminators.
FRACVAR_THREADS caps internal parallelism; 0 (the default) means
sequential evaluation, which this implementation always uses.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .discretize import make_trajectory
from .fracops import (
    FractionalOrder,
    SampledFunction,
    UniformGrid,
    left_caputo,
    left_rl_integral,
    right_rl_derivative,
    right_rl_integral,
)
from .problems import SOLVER_KEYS, build_problem, parse_problem_file
from .residuals import el_residual, interior_sup, transversality
from .solver import SolverOptions, solve

__all__ = ["main", "console_main"]

_CHECK_TOL_KEY = "check.tol"
_DEFAULT_CHECK_TOL = 1e-2

_OPERATORS = {
    "left_caputo": lambda f, alpha: left_caputo(f, FractionalOrder(alpha)),
    "left_rl_integral": lambda f, alpha: left_rl_integral(f, alpha),
    "right_rl_integral": lambda f, alpha: right_rl_integral(f, alpha),
    "right_rl_derivative": lambda f, alpha: right_rl_derivative(f, FractionalOrder(alpha)),
}


class CliError(Exception):
    pass


def _read_threads_cap() -> int:
    raw = os.environ.get("FRACVAR_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise CliError(f"FRACVAR_THREADS must be an integer >= 0, got {raw!r}") from None
    if cap < 0:
        raise CliError(f"FRACVAR_THREADS must be an integer >= 0, got {raw!r}")
    return cap


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    allowed = set(SOLVER_KEYS) | {_CHECK_TOL_KEY}
    for item in pairs:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in allowed:
            raise CliError(
                f"--set key {key!r} unknown (allowed: {', '.join(sorted(allowed))})"
            )
        overrides[key] = value.strip()
    return overrides


def _solver_options(config: dict[str, str], overrides: dict[str, str]) -> SolverOptions:
    merged = {k: v for k, v in config.items() if k in SOLVER_KEYS}
    merged.update({k: v for k, v in overrides.items() if k in SOLVER_KEYS})
    opts = SolverOptions()
    try:
        if "solver.n_nodes" in merged:
            opts = replace(opts, n_nodes=int(merged["solver.n_nodes"]))
        if "solver.max_outer_iters" in merged:
            opts = replace(opts, max_outer_iters=int(merged["solver.max_outer_iters"]))
        if "solver.grad_tol" in merged:
            opts = replace(opts, grad_tol=float(merged["solver.grad_tol"]))
        if "solver.T_tol" in merged:
            opts = replace(opts, T_tol=float(merged["solver.T_tol"]))
        if "solver.seed" in merged:
            opts = replace(opts, perturbation_seed=int(merged["solver.seed"]))
    except ValueError as exc:
        raise CliError(f"bad solver option: {exc}") from exc
    return opts


def _load_problem(path: str) -> tuple:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"problem file not found: {path}")
    config = parse_problem_file(p.read_text(encoding="utf-8"), name=str(path))
    return build_problem(config), config


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = zip(*columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_csv(path: str, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"CSV file not found: {path}")
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CliError(f"{path}: empty file")
    header = [name.strip() for name in lines[0].split(",")]
    for name in required:
        if name not in header:
            raise CliError(f"{path}: missing column '{name}' (header: {header})")
    data: list[list[float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise CliError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            data.append([float(v) for v in parts])
        except ValueError:
            raise CliError(f"{path}:{lineno}: non-numeric field") from None
    cols = np.array(data, dtype=float).reshape(len(data), len(header))
    return {name: cols[:, i] for i, name in enumerate(header)}


def _write_report(out_dir: Path, report_dict: dict) -> Path:
    path = out_dir / "report.json"
    path.write_text(json.dumps(report_dict, indent=2) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# commands


def run_solve(args: argparse.Namespace) -> int:
    _read_threads_cap()
    overrides = _parse_overrides(args.set or [])
    problem, config = _load_problem(args.problem)
    opts = _solver_options(config, overrides)
    report = solve(problem, opts)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj = report.trajectory
    _write_csv(
        out_dir / "trajectory.csv",
        ["t", "x", "caputo_dx"],
        [traj.grid.nodes, traj.values, traj.caputo],
    )
    _write_report(out_dir, report.to_dict())

    print(f"T_star = {report.T_star!r}")
    print(f"objective = {report.objective!r}")
    print(f"converged = {report.converged}")
    print(f"el_interior_sup = {report.el_interior_sup!r}")
    print(f"wrote {out_dir / 'trajectory.csv'} and {out_dir / 'report.json'}")
    return 0 if report.converged else 2


def run_check(args: argparse.Namespace) -> int:
    _read_threads_cap()
    overrides = _parse_overrides(args.set or [])
    problem, config = _load_problem(args.problem)
    opts = _solver_options(config, overrides)
    tol = _DEFAULT_CHECK_TOL
    if _CHECK_TOL_KEY in overrides:
        try:
            tol = float(overrides[_CHECK_TOL_KEY])
        except ValueError:
            raise CliError(f"bad {_CHECK_TOL_KEY}: {overrides[_CHECK_TOL_KEY]!r}") from None

    if not args.candidate:
        raise CliError("check needs --candidate CSV")
    cols = _read_csv(args.candidate, required=("t", "x"))
    t, x_vals = cols["t"], cols["x"]
    if len(t) < 3:
        raise CliError(f"{args.candidate}: need at least 3 rows, got {len(t)}")
    dt = np.diff(t)
    if dt.min() <= 0:
        raise CliError(f"{args.candidate}: t column must be strictly increasing")
    h = (t[-1] - t[0]) / (len(t) - 1)
    if np.max(np.abs(dt - h)) > 1e-9 * max(abs(h), 1.0):
        raise CliError(f"{args.candidate}: t grid is not uniform")
    if abs(t[0] - problem.a) > 1e-9 * (1.0 + abs(problem.a)):
        raise CliError(
            f"{args.candidate}: first time {t[0]} does not match problem a={problem.a}"
        )

    T = float(t[-1])
    grid = UniformGrid(problem.a, T, opts.n_nodes)
    resampled = np.interp(grid.nodes, t, x_vals)
    try:
        traj = make_trajectory(problem, resampled, T)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    el = el_residual(problem, traj, T)
    el_sup = interior_sup(el.values)
    rep = transversality(problem, traj, T)
    rep_dict = rep.to_dict()

    print(f"EL interior sup-norm = {el_sup!r}")
    checked = {"el_interior_sup": el_sup}
    for key in ("R1", "R2"):
        if key in rep_dict:
            print(f"{key} = {rep_dict[key]!r}")
            checked[key] = abs(rep_dict[key])
    if "complementarity" in rep_dict:
        print(f"complementarity = {rep_dict['complementarity']!r}")
        checked["complementarity"] = abs(rep_dict["complementarity"])
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_report(out_dir, {"el_interior_sup": el_sup, "residuals": rep_dict, "tol": tol})

    ok = all(v <= tol for v in checked.values())
    print(f"check {'PASS' if ok else 'FAIL'} (tol={tol!r})")
    return 0 if ok else 2


def run_ops(args: argparse.Namespace) -> int:
    _read_threads_cap()
    if not args.candidate:
        raise CliError("ops needs --candidate input CSV")
    if not args.operator:
        raise CliError("ops needs --operator NAME")
    if args.operator not in _OPERATORS:
        raise CliError(
            f"unknown operator {args.operator!r} (known: {', '.join(sorted(_OPERATORS))})"
        )
    if args.alpha is None:
        raise CliError("ops needs --alpha")

    cols = _read_csv(args.candidate, required=("t", "x"))
    t, x_vals = cols["t"], cols["x"]
    if len(t) < 3:
        raise CliError(f"{args.candidate}: need at least 3 rows, got {len(t)}")
    dt = np.diff(t)
    if dt.min() <= 0 or np.max(np.abs(dt - dt.mean())) > 1e-9 * max(abs(dt.mean()), 1.0):
        raise CliError(f"{args.candidate}: t grid must be uniform and increasing")
    grid = UniformGrid(float(t[0]), float(t[-1]), len(t))
    f = SampledFunction(grid, x_vals)
    try:
        result = _OPERATORS[args.operator](f, float(args.alpha))
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{args.operator}.csv"
    _write_csv(out_path, ["t", "y"], [grid.nodes, result.values])
    print(f"wrote {out_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracvar",
        description="Solve and verify fractional variational problems with variable endpoints.",
    )
    parser.add_argument("--version", action="version", version=f"fracvar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--problem", help="problem file (key = value lines)")
        sp.add_argument("--out", default="fracvar-out", help="output directory")
        sp.add_argument("--candidate", help="candidate/input CSV with t,x columns")
        sp.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override solver.* problem-file keys (and check.tol for check)",
        )
        sp.add_argument("--operator", help="operator name for the ops command")
        sp.add_argument("--alpha", type=float, help="operator order for the ops command")

    for name, fn in (("solve", run_solve), ("check", run_check), ("ops", run_ops)):
        sp = sub.add_parser(name)
        common(sp)
        sp.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command in ("solve", "check") and not args.problem:
        print(f"error: {args.command} needs --problem", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (CliError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())
