"""Experiment CLI: solve / pi / study / check over a declarative config file.

    hjpi solve --config run.ini [--out DIR] [--threads N]
    hjpi pi    --config run.ini ...
    hjpi study --config run.ini ...
    hjpi check --config run.ini ...

Outputs are CSV (header row, numbers with 17 significant digits) plus a JSON
summary with a fixed key set.  Identical configs and seeds produce
byte-identical outputs; ``--threads`` only caps worker parallelism and never
changes results (the current implementation is vectorised single-process, so
the flag is validated and recorded).  Exit codes: 0 success, 1 numeric or
assertion failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .analysis import (
    check_bernstein,
    check_monotone_comparison,
    hamiltonian_source,
    run_refinement_study,
)
from .config import ConfigError, RunConfig, build_problem, load_config, resolve_h
from .grid import GridError
from .pi import PiConfig, run_policy_iteration
from .problem import ProblemError, hamiltonian_lipschitz_check
from .problems import REGISTRY
from .scheme import (
    CflError,
    MonotonicityError,
    NumericError,
    select_scheme_params,
    solve_value,
)

__all__ = ["main"]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_json_ready(obj), indent=2, sort_keys=True) + "\n")


def _scheme_kwargs(cfg: RunConfig) -> dict:
    return {
        "cfl_margin": cfg.cfl_margin,
        "nu_override": cfg.nu_h,
        "nu_scale": cfg.nu_scale,
    }


def _params_echo(cfg: RunConfig, params, threads: int) -> dict:
    return {
        "problem": cfg.problem_name,
        "h": params.h,
        "tau": params.tau,
        "nu_h": params.nu_h,
        "lambda_h": params.lambda_h,
        "Lambda_h": params.Lambda_h,
        "cfl_margin": params.cfl_margin,
        "K": params.grid.K,
        "cells": list(params.grid.cells),
        "seed": cfg.seed,
        "threads": threads,
        "monotone_certified": True,
        "bounds_method": None,
    }


def cmd_solve(cfg: RunConfig, out: Path, threads: int) -> int:
    problem = build_problem(cfg)
    params = select_scheme_params(
        problem, resolve_h(cfg, problem), cfg.T, mode="value_only", **_scheme_kwargs(cfg)
    )
    t0 = time.perf_counter()
    sol = solve_value(problem, params)
    runtime = time.perf_counter() - t0

    grid = params.grid
    levels = np.unique(
        np.round(np.linspace(0, grid.K, cfg.snapshot_levels)).astype(int)
    )
    header = ["level", "t"] + [f"i{j}" for j in range(grid.d)] + ["value"]
    rows = []
    flat_vals = sol.values.reshape(grid.K + 1, -1)
    idx = np.stack(
        np.unravel_index(np.arange(grid.n_cells), grid.cells), axis=-1
    )
    for k in levels:
        t = float(grid.times[k])
        for j in range(grid.n_cells):
            rows.append([int(k), t, *(int(c) for c in idx[j]), float(flat_vals[k, j])])
    write_csv(out / "solve_snapshots.csv", header, rows)

    b = problem.bounds
    sup_norm = float(np.max(np.abs(sol.values)))
    scale = max(1.0, b.g_sup + b.c_sup * grid.T)
    bound_ok = True
    for k in range(grid.K + 1):
        cap = b.g_sup + b.c_sup * (grid.T - float(grid.times[k]))
        if float(np.max(np.abs(sol.values[k]))) > cap + 1e-12 * scale:
            bound_ok = False
    summary = _params_echo(cfg, params, threads)
    summary.update(
        {
            "command": "solve",
            "sup_norm": sup_norm,
            "uniform_bound_ok": bound_ok,
            "runtime_sec": runtime,
            "snapshot_levels": [int(k) for k in levels],
            "bounds_method": problem.bounds.method,
        }
    )
    write_json(out / "solve_summary.json", summary)
    print(f"solve: sup-norm {sup_norm:.6g}, uniform bound ok: {bound_ok}")
    return 0


def cmd_pi(cfg: RunConfig, out: Path, threads: int) -> int:
    problem = build_problem(cfg)
    params = select_scheme_params(
        problem, resolve_h(cfg, problem), cfg.T, mode="pi", **_scheme_kwargs(cfg)
    )
    pi_cfg = PiConfig(
        max_iters=cfg.pi_max_iters,
        abs_tol=cfg.pi_abs_tol,
        initial_policy=(cfg.pi_init_a, cfg.pi_init_b),
    )
    run, report = run_policy_iteration(problem, params, pi_cfg)

    header = ["n", "sup_err", "grad_err_max", "ham_res", "log2_bound"]
    rows = [
        [
            n,
            report.sup_err[n],
            max(report.grad_err[n]),
            report.ham_res[n],
            report.constants.bound_sq_log2(n),
        ]
        for n in range(report.iters)
    ]
    write_csv(out / "pi_report.csv", header, rows)

    summary = _params_echo(cfg, params, threads)
    summary.update(
        {
            "command": "pi",
            "c1": report.constants.c1,
            "log_ch": report.constants.log_ch,
            "ch": report.constants.ch,
            "fitted_ratio": report.fitted_ratio,
            "iters": report.iters,
            "converged": report.converged,
            "abs_tol": cfg.pi_abs_tol,
            "max_iters": cfg.pi_max_iters,
            "bound_log2_ok": report.bound_satisfied(),
            "bounds_method": problem.bounds.method,
        }
    )
    write_json(out / "pi_summary.json", summary)
    print(
        f"pi: {report.iters} iterations, final sup_err {report.sup_err[-1]:.3e}, "
        f"converged: {report.converged}"
    )
    return 0


def cmd_study(cfg: RunConfig, out: Path, threads: int) -> int:
    problem = build_problem(cfg)
    if cfg.h_list is None:
        raise ConfigError("study requires 'grid.h_list'")
    if cfg.study_regime is None or cfg.study_alpha is None:
        raise ConfigError("study requires 'study.regime' and 'study.alpha'")
    study = run_refinement_study(
        problem,
        cfg.h_list,
        cfg.study_alpha,
        cfg.study_regime,
        cfg.T,
        h_ref=cfg.study_h_ref,
        cfl_margin=cfg.cfl_margin,
    )
    header = ["kind", "h", "tau", "nu_h", "err", "order", "r2", "target"]
    rows = [["level", h, tau, nu, err, "", "", ""] for (h, tau, nu, err) in study.rows]
    rows.append(["fit", "", "", "", "", study.order, study.r2, study.target])
    write_csv(out / "study.csv", header, rows)
    summary = {
        "command": "study",
        "problem": cfg.problem_name,
        "regime": study.regime,
        "alpha": study.alpha,
        "order": study.order,
        "intercept": study.intercept,
        "r2": study.r2,
        "target": study.target,
        "exact": study.exact,
        "monotone": study.monotone,
        "h_ref": study.h_ref,
        "ref_self_err": study.ref_self_err,
        "flags": study.flags,
        "rows": [list(r) for r in study.rows],
        "seed": cfg.seed,
        "threads": threads,
        "bounds_method": problem.bounds.method,
    }
    write_json(out / "study_summary.json", summary)
    print(
        f"study[{study.regime}]: fitted order {study.order:.4f} "
        f"(target {study.target:.4f}, r2 {study.r2:.4f})"
    )
    return 0


def cmd_check(cfg: RunConfig, out: Path, threads: int) -> int:
    problem = build_problem(cfg)
    if problem.exact_response is not None:
        raise ConfigError("check requires a sampled (finite-control) problem")
    params = select_scheme_params(
        problem, resolve_h(cfg, problem), cfg.T, mode="pi", **_scheme_kwargs(cfg)
    )
    results = {}

    mono = check_monotone_comparison(
        problem,
        params,
        trials=cfg.check_trials,
        terminal_pairs=cfg.check_terminal_pairs,
        seed=cfg.seed,
    )
    results["monotone_comparison"] = {
        "passed": mono.passed,
        "max_step_violation": mono.max_step_violation,
        "max_solve_violation": mono.max_solve_violation,
        "trials": mono.trials,
        "scale": mono.scale,
    }

    v = solve_value(problem, params)
    ell = hamiltonian_source(problem, params, v)
    bern = check_bernstein(problem, params, v, ell)
    results["bernstein"] = {
        "passed": bern.passed,
        "min_slack": bern.min_slack,
        "scale": bern.scale,
        "n_checked": bern.n_checked,
    }

    lip = hamiltonian_lipschitz_check(
        problem, cfg.check_lipschitz_samples, seed=cfg.seed, t_max=cfg.T
    )
    results["hamiltonian_regularity"] = {
        "passed": not lip.flagged,
        "max_ratio": lip.max_ratio,
        "n_samples": lip.n_samples,
        "bounds_method": lip.bounds_method,
    }

    pi_cfg = PiConfig(
        max_iters=cfg.pi_max_iters,
        abs_tol=cfg.pi_abs_tol,
        initial_policy=(cfg.pi_init_a, cfg.pi_init_b),
    )
    _, report = run_policy_iteration(problem, params, pi_cfg)
    ratios = [r for r in report.gap_max_ratio if not math.isnan(r)]
    zeros = [z for z in report.gap_zero_rhs_lhs if not math.isnan(z)]
    gap_ok = all(r <= 1.0 + 1e-9 for r in ratios) and all(z <= 1e-12 for z in zeros)
    results["hamiltonian_gap"] = {
        "passed": gap_ok,
        "max_ratio": max(ratios) if ratios else 0.0,
        "max_zero_rhs_lhs": max(zeros) if zeros else 0.0,
        "pi_iters": report.iters,
    }

    all_ok = all(r["passed"] for r in results.values())
    for name, res in results.items():
        print(f"{'PASS' if res['passed'] else 'FAIL'} {name}")
    write_json(
        out / "check_summary.json",
        {
            "command": "check",
            "problem": cfg.problem_name,
            "seed": cfg.seed,
            "threads": threads,
            "suites": results,
            "all_passed": all_ok,
            "bounds_method": problem.bounds.method,
        },
    )
    return 0 if all_ok else 1


_COMMANDS = {"solve": cmd_solve, "pi": cmd_pi, "study": cmd_study, "check": cmd_check}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjpi",
        description="Monotone space-time scheme and policy iteration experiments.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the run configuration file")
    common.add_argument("--out", default=None, help="output directory (default: config output.dir or ./out)")
    common.add_argument(
        "--threads", type=int, default=1,
        help="worker-parallelism cap; affects speed only, never results",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="backward-solve the value equation")
    sub.add_parser("pi", parents=[common], help="run policy iteration against the fixed-point oracle")
    sub.add_parser("study", parents=[common], help="grid-refinement convergence study")
    sub.add_parser("check", parents=[common], help="run the property-check suites")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        cfg = load_config(args.config)
        out = Path(args.out or cfg.out_dir or "out")
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, args.threads)
    except (ConfigError, ProblemError, GridError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (CflError, MonotonicityError, NumericError, MemoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
