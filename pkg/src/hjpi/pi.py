"""Policy iteration for the discrete scheme, with per-iteration diagnostics.

Each round evaluates the current per-level policies by backward induction
(:func:`~hjpi.scheme.solve_frozen`) and then improves them pointwise: at every
cell the inner argmin over a is taken for each b against the current value's
central gradient, then the outer argmax over b, exactly the sup-inf selection
order of the Hamiltonian.  The iterates are measured against the directly
computed fixed point V* = :func:`~hjpi.scheme.solve_value`, and the report
records, per iteration,

  * sup_err      = sup |V_n - V*|,
  * grad_err[i]  = sup |D_i (V_n - V*)| (forward differences),
  * ham_res      = sup |L(t,x,grad V*)(policy_n) - H(t,x,grad V*)|,

together with the theoretical constants of the exponential error bound
sup_err^2 <= C_h 2^(-n-1), where

    C1  = 48 max(||c||_inf^2, 2 d ||f||_inf^2)
    C_h = exp(C1 T / lambda_h) (12 ||g||_inf^2 + T lambda_h).

C_h can overflow for small lambda_h, so it is always carried in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .grid import (
    Field,
    Grid,
    SpaceTimeField,
    central_gradient_array,
    one_sided_diff_array,
)
from .problem import Problem, ProblemError, best_response_grid, hamiltonian_grid
from .scheme import (
    CflError,
    SchemeParams,
    level_tables,
    solve_frozen,
    solve_value,
)

__all__ = [
    "PolicyField",
    "constant_policy",
    "PiConfig",
    "PiBoundConstants",
    "pi_bound_constants",
    "PiReport",
    "PiRun",
    "improve_policy",
    "run_policy_iteration",
    "HamiltonianGapReport",
    "hamiltonian_gap_check",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class PolicyField:
    """Per-cell control index pair at one time level."""

    grid: Grid
    a_idx: np.ndarray
    b_idx: np.ndarray
    t: Optional[float] = None

    def __post_init__(self):
        for name in ("a_idx", "b_idx"):
            arr = np.asarray(getattr(self, name))
            if not np.issubdtype(arr.dtype, np.integer):
                raise ProblemError(f"{name} must be an integer array")
            arr = arr.astype(np.int64).reshape(self.grid.cells)
            if arr.min() < 0:
                raise ProblemError(f"{name} contains negative control indices")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def constant_policy(grid: Grid, a_index: int, b_index: int, t: Optional[float] = None) -> PolicyField:
    return PolicyField(
        grid,
        np.full(grid.cells, a_index, dtype=np.int64),
        np.full(grid.cells, b_index, dtype=np.int64),
        t,
    )


@dataclass(frozen=True)
class PiConfig:
    max_iters: int = 60
    abs_tol: float = 1e-12
    initial_policy: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


@dataclass(frozen=True)
class PiBoundConstants:
    """Constants of the exponential PI error bound, carried in log space."""

    c1: float
    ch: float
    log_ch: float

    def bound_sq_log2(self, n: int) -> float:
        """log2 of the bound on sup_err^2 at iteration n."""
        return self.log_ch / _LN2 - (n + 1)


def pi_bound_constants(problem: Problem, params: SchemeParams) -> PiBoundConstants:
    """C1 and C_h for the given problem/params; overflow-safe via log_ch."""
    b = problem.bounds
    lam = params.lambda_h
    if lam <= 0:
        raise CflError(f"lambda_h must be positive, got {lam}")
    T = params.grid.T
    c1 = 48.0 * max(b.c_sup**2, 2.0 * problem.d * b.f_sup**2)
    log_ch = c1 * T / lam + math.log(12.0 * b.g_sup**2 + T * lam)
    ch = math.exp(log_ch) if log_ch < 709.0 else math.inf
    return PiBoundConstants(c1=c1, ch=ch, log_ch=log_ch)


@dataclass
class PiReport:
    """Per-iteration diagnostics of one PI run (row n corresponds to V_n)."""

    sup_err: list[float] = dc_field(default_factory=list)
    grad_err: list[tuple[float, ...]] = dc_field(default_factory=list)
    ham_res: list[float] = dc_field(default_factory=list)
    chain_rhs: list[float] = dc_field(default_factory=list)
    gap_max_ratio: list[float] = dc_field(default_factory=list)
    gap_zero_rhs_lhs: list[float] = dc_field(default_factory=list)
    constants: Optional[PiBoundConstants] = None
    fitted_ratio: float = math.nan
    iters: int = 0
    converged: bool = False
    abs_tol: float = math.nan

    @property
    def log2_bound_sq(self) -> list[float]:
        return [self.constants.bound_sq_log2(n) for n in range(self.iters)]

    def bound_satisfied(self, floor: float = 1e-10) -> bool:
        """Whether sup_err[n]^2 stays under the theoretical bound (checked in
        log2 space) at every n >= 1 with sup_err[n] above ``floor``."""
        for n in range(1, self.iters):
            e = self.sup_err[n]
            if e > floor and 2.0 * math.log2(e) > self.constants.bound_sq_log2(n):
                return False
        return True


@dataclass
class PiRun:
    """Outcome of a PI run: the oracle, the last iterate and its policies."""

    v_star: SpaceTimeField
    v_final: SpaceTimeField
    policies: list[PolicyField]
    iters: int
    converged: bool


def improve_policy(problem: Problem, field: Field, t) -> PolicyField:
    """Pointwise best response to the field's central gradient at time t."""
    if problem.exact_response is not None:
        raise ProblemError(
            "policy improvement needs finite control sets; "
            f"problem '{problem.name}' uses a closed-form response"
        )
    grid = field.grid
    c_tab, f_tab, _ = level_tables(problem, grid, t)
    grad = central_gradient_array(field.values, grid.h)
    P = grad.reshape(grid.d, -1).T
    a_idx, b_idx, _ = best_response_grid(
        problem, t, grid.points_flat, P, tables=(c_tab, f_tab)
    )
    return PolicyField(
        grid,
        a_idx.reshape(grid.cells),
        b_idx.reshape(grid.cells),
        float(t),
    )


@dataclass
class HamiltonianGapReport:
    """Audit of |L(grad V_n)(policy_n) - H(grad V*)| against the gradient-gap bound."""

    max_ratio: float
    zero_rhs_max_lhs: float
    flagged: bool


def _grad_norms(values: np.ndarray, h: float, d: int) -> np.ndarray:
    """Euclidean norm of the central gradient per level, shape (K+1, n_cells)."""
    out = np.empty((values.shape[0], int(np.prod(values.shape[1:]))))
    for k in range(values.shape[0]):
        g = central_gradient_array(values[k], h).reshape(d, -1)
        out[k] = np.sqrt(np.sum(g * g, axis=0))
    return out


def _frozen_rate(problem, grid, t, policy, P):
    """L(t, x, p)(policy) on the whole lattice for the given gradients P (n, d)."""
    c_tab, f_tab, _ = level_tables(problem, grid, t)
    n = grid.n_cells
    flat = np.arange(n)
    a = policy.a_idx.reshape(-1)
    b = policy.b_idx.reshape(-1)
    rate = c_tab[flat, a, b] + P[:, 0] * f_tab[flat, a, b, 0]
    for i in range(1, grid.d):
        rate = rate + P[:, i] * f_tab[flat, a, b, i]
    return rate


def hamiltonian_gap_check(
    problem: Problem,
    v_n: SpaceTimeField,
    v_prev: SpaceTimeField,
    v_star: SpaceTimeField,
    policies: Sequence[PolicyField],
    *,
    ratio_tol: float = 1e-9,
    zero_tol: float = 1e-12,
) -> HamiltonianGapReport:
    """Check, cellwise over all stepped levels, that

        |L(t,x,grad V_n)(policy_n) - H(t,x,grad V*)|
            <= ||f||_inf (|grad(V_n - V*)| + |grad(V_prev - V*)|).

    ``policies`` must be the improvement step derived from ``v_prev``.  Cells
    where the right-hand side vanishes must have lhs <= ``zero_tol``.
    """
    grid = v_n.grid
    if v_prev.grid != grid or v_star.grid != grid:
        raise ValueError("all fields must live on the same grid")
    f_sup = problem.bounds.f_sup
    K = grid.K
    max_ratio = 0.0
    zero_max = 0.0
    for k in range(1, K + 1):
        t = float(grid.times[k])
        gn = central_gradient_array(v_n.values[k], grid.h).reshape(grid.d, -1)
        gp = central_gradient_array(v_prev.values[k], grid.h).reshape(grid.d, -1)
        gs = central_gradient_array(v_star.values[k], grid.h).reshape(grid.d, -1)
        P_n = gn.T
        H_s = hamiltonian_grid(problem, t, grid.points_flat, gs.T)
        lhs = np.abs(_frozen_rate(problem, grid, t, policies[k - 1], P_n) - H_s)
        rhs = f_sup * (
            np.sqrt(np.sum((gn - gs) ** 2, axis=0))
            + np.sqrt(np.sum((gp - gs) ** 2, axis=0))
        )
        pos = rhs > 0
        if pos.any():
            max_ratio = max(max_ratio, float(np.max(lhs[pos] / rhs[pos])))
        if (~pos).any():
            zero_max = max(zero_max, float(np.max(lhs[~pos], initial=0.0)))
    return HamiltonianGapReport(
        max_ratio=max_ratio,
        zero_rhs_max_lhs=zero_max,
        flagged=(max_ratio > 1.0 + ratio_tol) or (zero_max > zero_tol),
    )


def _fit_geometric_ratio(errs: Sequence[float], floor: float) -> float:
    """Per-iteration ratio fitted over the longest strictly-decreasing run
    above ``floor``; nan when no such run of length >= 2 exists."""
    n = len(errs)
    valid = [
        errs[i] < errs[i - 1] and errs[i] > floor and errs[i - 1] > floor
        for i in range(1, n)
    ]
    best_len, best_end, cur = 0, -1, 0
    for i, ok in enumerate(valid):
        cur = cur + 1 if ok else 0
        if cur > best_len:
            best_len, best_end = cur, i
    if best_len == 0:
        return math.nan
    end = best_end + 1
    start = end - best_len
    return (errs[end] / errs[start]) ** (1.0 / best_len)


def run_policy_iteration(
    problem: Problem, params: SchemeParams, config: Optional[PiConfig] = None
) -> tuple[PiRun, PiReport]:
    """Alternate policy evaluation and pointwise improvement until the iterate
    matches the fixed-point oracle within ``abs_tol`` (sup norm) or
    ``max_iters`` improvement rounds have been taken.

    The oracle V* is computed once up front by direct backward induction;
    improvement at each time level uses the current iterate's own gradients at
    that level.  Refuses params not selected in pi mode.
    """
    config = config or PiConfig()
    if params.mode != "pi":
        raise CflError(
            "params are not PI-admissible: select_scheme_params(mode='pi') required"
        )
    if problem.exact_response is not None:
        raise ProblemError("policy iteration requires a sampled (finite-control) problem")
    a0, b0 = config.initial_policy
    if not 0 <= a0 < len(problem.controls_a) or not 0 <= b0 < len(problem.controls_b):
        raise ProblemError(f"initial policy {config.initial_policy} out of range")

    grid = params.grid
    K, d, h = grid.K, grid.d, grid.h
    n = grid.n_cells

    v_star = solve_value(problem, params)
    vs = v_star.values
    grad_star = np.empty((K + 1, d, n))
    for k in range(K + 1):
        grad_star[k] = central_gradient_array(vs[k], h).reshape(d, -1)
    H_star = np.empty((K + 1, n))
    for k in range(1, K + 1):
        t = float(grid.times[k])
        c_tab, f_tab, _ = level_tables(problem, grid, t)
        H_star[k] = hamiltonian_grid(
            problem, t, grid.points_flat, grad_star[k].T, tables=(c_tab, f_tab)
        )

    policies = [
        constant_policy(grid, a0, b0, float(grid.times[k])) for k in range(1, K + 1)
    ]
    report = PiReport(constants=pi_bound_constants(problem, params), abs_tol=config.abs_tol)
    f_sup = problem.bounds.f_sup

    v_prev: Optional[SpaceTimeField] = None
    prev_norms: Optional[np.ndarray] = None
    v_n: Optional[SpaceTimeField] = None
    converged = False

    for it in range(config.max_iters + 1):
        v_n = solve_frozen(problem, params, policies)
        u = v_n.values - vs
        report.sup_err.append(float(np.max(np.abs(u))))
        gerr = []
        for i in range(d):
            m = 0.0
            for k in range(K + 1):
                m = max(m, float(np.max(np.abs(one_sided_diff_array(u[k], h, i + 1)))))
            gerr.append(m)
        report.grad_err.append(tuple(gerr))

        hr = 0.0
        for k in range(1, K + 1):
            t = float(grid.times[k])
            L_star = _frozen_rate(problem, grid, t, policies[k - 1], grad_star[k].T)
            hr = max(hr, float(np.max(np.abs(L_star - H_star[k]))))
        report.ham_res.append(hr)

        u_norms = _grad_norms(u, h, d)
        if prev_norms is None:
            report.chain_rhs.append(math.nan)
            report.gap_max_ratio.append(math.nan)
            report.gap_zero_rhs_lhs.append(math.nan)
        else:
            report.chain_rhs.append(2.0 * f_sup * float(np.max(u_norms + prev_norms)))
            gap = hamiltonian_gap_check(problem, v_n, v_prev, v_star, policies)
            report.gap_max_ratio.append(gap.max_ratio)
            report.gap_zero_rhs_lhs.append(gap.zero_rhs_max_lhs)

        if report.sup_err[-1] < config.abs_tol:
            converged = True
            break
        if it == config.max_iters:
            break

        new_policies = [
            improve_policy(problem, v_n.level(k), float(grid.times[k]))
            for k in range(1, K + 1)
        ]
        v_prev = v_n
        prev_norms = u_norms
        policies = new_policies

    report.iters = len(report.sup_err)
    report.converged = converged
    floor = max(config.abs_tol, 1e-13 * max(1.0, report.sup_err[0]))
    report.fitted_ratio = _fit_geometric_ratio(report.sup_err, floor)
    run = PiRun(
        v_star=v_star,
        v_final=v_n,
        policies=list(policies),
        iters=report.iters,
        converged=converged,
    )
    return run, report
