"""Declarative run configuration: a sectioned key-value file (INI syntax).

Grammar: ``[section]`` headers, ``key = value`` lines, ``;`` or ``#`` comments.
Unknown sections or keys are rejected before any computation.  Keys under
``[problem]`` other than ``name`` are forwarded to the problem builder and
validated against its signature.

    [run]      seed
    [problem]  name, plus builder parameters (d, box, ...)
    [grid]     T (required), h | cells, h_list (study only)
    [scheme]   cfl_margin, nu_h, nu_scale
    [pi]       max_iters, abs_tol, init_a, init_b
    [study]    regime, alpha, h_ref
    [check]    trials, terminal_pairs, lipschitz_samples
    [output]   dir, snapshot_levels
"""

from __future__ import annotations

import configparser
import inspect
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .problem import Problem
from .problems import REGISTRY

__all__ = ["ConfigError", "RunConfig", "load_config", "build_problem", "resolve_h"]


class ConfigError(Exception):
    """Malformed or inconsistent run configuration (usage error, exit code 2)."""


def _float_list(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


_SCHEMA = {
    "run": {"seed": int},
    "grid": {"T": float, "h": float, "cells": int, "h_list": _float_list},
    "scheme": {"cfl_margin": float, "nu_h": float, "nu_scale": float},
    "pi": {"max_iters": int, "abs_tol": float, "init_a": int, "init_b": int},
    "study": {"regime": str, "alpha": float, "h_ref": float},
    "check": {"trials": int, "terminal_pairs": int, "lipschitz_samples": int},
    "output": {"dir": str, "snapshot_levels": int},
}


@dataclass
class RunConfig:
    problem_name: str
    problem_params: dict = field(default_factory=dict)
    seed: int = 0
    T: Optional[float] = None
    h: Optional[float] = None
    cells: Optional[int] = None
    h_list: Optional[list[float]] = None
    cfl_margin: float = 0.9
    nu_h: Optional[float] = None
    nu_scale: Optional[float] = None
    pi_max_iters: int = 60
    pi_abs_tol: float = 1e-12
    pi_init_a: int = 0
    pi_init_b: int = 0
    study_regime: Optional[str] = None
    study_alpha: Optional[float] = None
    study_h_ref: Optional[float] = None
    check_trials: int = 200
    check_terminal_pairs: int = 3
    check_lipschitz_samples: int = 10_000
    out_dir: Optional[str] = None
    snapshot_levels: int = 5


_DEST = {
    ("run", "seed"): "seed",
    ("grid", "T"): "T",
    ("grid", "h"): "h",
    ("grid", "cells"): "cells",
    ("grid", "h_list"): "h_list",
    ("scheme", "cfl_margin"): "cfl_margin",
    ("scheme", "nu_h"): "nu_h",
    ("scheme", "nu_scale"): "nu_scale",
    ("pi", "max_iters"): "pi_max_iters",
    ("pi", "abs_tol"): "pi_abs_tol",
    ("pi", "init_a"): "pi_init_a",
    ("pi", "init_b"): "pi_init_b",
    ("study", "regime"): "study_regime",
    ("study", "alpha"): "study_alpha",
    ("study", "h_ref"): "study_h_ref",
    ("check", "trials"): "check_trials",
    ("check", "terminal_pairs"): "check_terminal_pairs",
    ("check", "lipschitz_samples"): "check_lipschitz_samples",
    ("output", "dir"): "out_dir",
    ("output", "snapshot_levels"): "snapshot_levels",
}


def load_config(path) -> RunConfig:
    """Parse and validate a configuration file; unknown keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(
        inline_comment_prefixes=(";", "#"), interpolation=None, strict=True
    )
    try:
        parser.read(path)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err

    if "problem" not in parser or "name" not in parser["problem"]:
        raise ConfigError("missing required key 'problem.name'")
    name = parser["problem"]["name"].strip()
    if name not in REGISTRY:
        known = ", ".join(sorted(REGISTRY))
        raise ConfigError(f"unknown problem '{name}' in problem.name; known: {known}")

    # problem parameters validated against the builder's signature
    sig = inspect.signature(REGISTRY[name])
    params = {}
    for key, raw in parser["problem"].items():
        if key == "name":
            continue
        if key not in sig.parameters:
            raise ConfigError(f"unknown key 'problem.{key}' for problem '{name}'")
        default = sig.parameters[key].default
        caster = type(default) if default is not inspect.Parameter.empty else float
        try:
            params[key] = caster(raw)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad value for 'problem.{key}': {raw!r} ({err})") from err

    cfg = RunConfig(problem_name=name, problem_params=params)
    for section in parser.sections():
        if section == "problem":
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section '[{section}]'")
        for key, raw in parser[section].items():
            # configparser lower-cases keys; recover the canonical spelling
            canon = next((k for k in _SCHEMA[section] if k.lower() == key), None)
            if canon is None:
                raise ConfigError(f"unknown key '{section}.{key}'")
            caster = _SCHEMA[section][canon]
            try:
                value = caster(raw)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"bad value for '{section}.{canon}': {raw!r} ({err})") from err
            setattr(cfg, _DEST[(section, canon)], value)

    if cfg.T is None:
        raise ConfigError("missing required key 'grid.T'")
    if cfg.T <= 0:
        raise ConfigError(f"grid.T must be positive, got {cfg.T}")
    if cfg.h is not None and cfg.cells is not None:
        raise ConfigError("give 'grid.h' or 'grid.cells', not both")
    if cfg.nu_h is not None and cfg.nu_scale is not None:
        raise ConfigError("give 'scheme.nu_h' or 'scheme.nu_scale', not both")
    if cfg.snapshot_levels < 2:
        raise ConfigError("output.snapshot_levels must be >= 2")
    return cfg


def build_problem(cfg: RunConfig) -> Problem:
    return REGISTRY[cfg.problem_name](**cfg.problem_params)


def resolve_h(cfg: RunConfig, problem: Problem) -> float:
    """Spatial step from the config: h directly, or box/cells."""
    if cfg.h is not None:
        return cfg.h
    if cfg.cells is not None:
        return problem.box[0] / cfg.cells
    raise ConfigError("missing 'grid.h' (or 'grid.cells')")
