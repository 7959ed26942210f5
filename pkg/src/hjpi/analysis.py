"""Property verifiers and convergence-order studies.

* ``check_bernstein`` audits the discrete gradient-energy inequality: for u
  solving  d_t u + (1/2) sum_i M_i D2_i u = ell  with coefficients
  M_i = Sigma_i + nu_h in [lambda, Lambda] and  d Lambda tau <= 4 h^2,

      Lop(u^2) >= 2 u ell - 2 tau ell^2 + (lambda/4) sum_j |D_j u|^2

  cellwise, where the sum runs over forward and backward differences on every
  axis.  The checker demands the equation residual vanish first, so it stays a
  pure inequality audit.

* ``fine_grid_reference`` / ``run_refinement_study`` measure the sup-norm
  distance between coarse solves and a 4x (or finer) reference solve, and fit
  the observed order on log-log axes.  In the nondegenerate regime (inf Sigma
  bounded away from 0) the artificial viscosity is switched off and the target
  exponent is alpha/2; in the degenerate regime nu_h = h^(4 alpha / (9 + 7
  alpha)) and the target is 2 alpha / (9 + 7 alpha).

* ``check_monotone_comparison`` exercises the monotone-update and discrete
  comparison properties on seeded random ordered data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .grid import (
    Grid,
    Field,
    SpaceTimeField,
    central_gradient_array,
    one_sided_diff_array,
    second_diff_array,
)
from .problem import Problem, ProblemError, hamiltonian_grid
from .scheme import (
    CflError,
    SchemeParams,
    level_tables,
    select_scheme_params,
    sigma_table,
    solve_value,
    step_frozen,
    step_value,
)
from .pi import PolicyField

__all__ = [
    "BernsteinReport",
    "check_bernstein",
    "hamiltonian_source",
    "FineGridReference",
    "fine_grid_reference",
    "RefinementStudy",
    "run_refinement_study",
    "degenerate_nu_exponent",
    "MonotoneReport",
    "check_monotone_comparison",
]


@dataclass
class BernsteinReport:
    """Cellwise slack of the gradient-energy inequality; pass means the minimum
    slack is above -tol * scale."""

    min_slack: float
    scale: float
    n_checked: int
    violations: list[tuple[int, tuple[int, ...]]]
    passed: bool


def hamiltonian_source(problem: Problem, params: SchemeParams, v: SpaceTimeField) -> SpaceTimeField:
    """The source ell = -H(t, x, grad_h v) making the value equation read
    d_t v + (1/2) sum_i M_i D2_i v = ell on every level."""
    grid = params.grid
    out = np.empty_like(v.values)
    for k in range(grid.K + 1):
        t = float(grid.times[k])
        grad = central_gradient_array(v.values[k], grid.h).reshape(grid.d, -1)
        c_tab, f_tab, _ = level_tables(problem, grid, t)
        out[k] = -hamiltonian_grid(
            problem, t, grid.points_flat, grad.T, tables=(c_tab, f_tab)
        ).reshape(grid.cells)
    return SpaceTimeField(grid, out)


def _weighted_lap(values, h, M_shaped):
    out = np.zeros_like(values)
    for i in range(values.ndim):
        out = out + M_shaped[i] * second_diff_array(values, h, i)
    return out


def check_bernstein(
    problem: Problem,
    params: SchemeParams,
    u: SpaceTimeField,
    ell: SpaceTimeField,
    *,
    precheck_tol: float = 1e-10,
    slack_tol: float = 1e-9,
    max_violations: int = 20,
) -> BernsteinReport:
    """Audit the gradient-energy inequality on (u, ell).

    Preconditions (verified, hard errors): d * Lambda_h * tau <= 4 h^2, and
    the pair satisfies the linear equation Lop(u) = ell cellwise to
    ``precheck_tol`` times its natural scale.  Inputs failing the equation are
    rejected rather than scored.
    """
    grid = params.grid
    if u.grid != grid or ell.grid != grid:
        raise ValueError("u and ell must live on the params grid")
    d, h, tau = grid.d, grid.h, grid.tau
    if d * params.Lambda_h * tau > 4.0 * h * h * (1 + 1e-12):
        raise CflError(
            f"gradient-energy condition violated: d*Lambda_h*tau = "
            f"{d * params.Lambda_h * tau:.17g} > 4 h^2 = {4 * h * h:.17g}"
        )

    K = grid.K
    lam = params.lambda_h

    # precondition: Lop(u) = ell at every stepped level
    max_resid = 0.0
    scale_pre = 1.0
    M_cache = {}
    for k in range(1, K + 1):
        t = float(grid.times[k])
        sig = sigma_table(problem, grid, t)
        M_shaped = [
            (sig[:, i] + params.nu_h).reshape(grid.cells) for i in range(d)
        ]
        M_cache[k] = M_shaped
        du = (u.values[k] - u.values[k - 1]) / tau
        resid = du + 0.5 * _weighted_lap(u.values[k], h, M_shaped) - ell.values[k]
        max_resid = max(max_resid, float(np.max(np.abs(resid))))
        scale_pre = max(scale_pre, float(np.max(np.abs(du))), float(np.max(np.abs(ell.values[k]))))
    if max_resid > precheck_tol * scale_pre:
        raise ValueError(
            "inputs rejected: Lop(u) != ell, max residual "
            f"{max_resid:.17g} > {precheck_tol:.1g} * scale {scale_pre:.17g}"
        )

    usq = u.values * u.values
    min_slack = math.inf
    scale = 1.0
    violations: list[tuple[int, tuple[int, ...]]] = []
    for k in range(1, K + 1):
        M_shaped = M_cache[k]
        lhs = (usq[k] - usq[k - 1]) / tau + 0.5 * _weighted_lap(usq[k], h, M_shaped)
        G = np.zeros_like(usq[k])
        for i in range(d):
            G = G + one_sided_diff_array(u.values[k], h, i + 1) ** 2
            G = G + one_sided_diff_array(u.values[k], h, -(i + 1)) ** 2
        ek = ell.values[k]
        rhs = 2.0 * u.values[k] * ek - 2.0 * tau * ek * ek + 0.25 * lam * G
        slack = lhs - rhs
        scale = max(scale, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
        kmin = float(np.min(slack))
        if kmin < min_slack:
            min_slack = kmin
        bad = np.argwhere(slack < -slack_tol * scale)
        for cell in bad[: max(0, max_violations - len(violations))]:
            violations.append((k, tuple(int(c) for c in cell)))

    passed = min_slack >= -slack_tol * scale
    return BernsteinReport(
        min_slack=min_slack,
        scale=scale,
        n_checked=K * grid.n_cells,
        violations=violations,
        passed=passed,
    )


@dataclass(eq=False)
class FineGridReference:
    """A fine solve standing in for the continuous solution, with an
    interpolator onto coarser grids (multilinear in space, linear in time;
    nodal lookups are exact on nested dyadic lattices and at shared time
    levels)."""

    problem: Problem
    params: SchemeParams
    field: SpaceTimeField

    def sample_onto(self, grid: Grid) -> np.ndarray:
        ref_grid = self.params.grid
        if grid.d != ref_grid.d:
            raise ValueError("dimension mismatch between reference and target grid")
        vals = self.field.values
        # exact nodal fast path for nested lattices
        ratios = []
        nested = True
        for i in range(grid.d):
            r = grid.h / ref_grid.h
            ri = round(r)
            if abs(r - ri) > 1e-9 or ref_grid.cells[i] != grid.cells[i] * ri:
                nested = False
                break
            ratios.append(ri)
        out = np.empty((grid.K + 1,) + grid.cells)
        for kc in range(grid.K + 1):
            t = float(grid.times[kc])
            pos = t / ref_grid.tau
            k0 = int(min(max(math.floor(pos), 0), ref_grid.K))
            w = pos - k0
            if k0 >= ref_grid.K or w <= 1e-12:
                level = vals[min(k0, ref_grid.K)]
            else:
                level = (1.0 - w) * vals[k0] + w * vals[k0 + 1]
            if nested:
                sel = tuple(slice(None, None, r) for r in ratios)
                out[kc] = level[sel]
            else:
                out[kc] = _multilinear(level, ref_grid, grid)
        return out


def _multilinear(level: np.ndarray, ref_grid: Grid, grid: Grid) -> np.ndarray:
    d = grid.d
    idx0, frac = [], []
    for i in range(d):
        pos = np.arange(grid.cells[i]) * (grid.h / ref_grid.h)
        base = np.floor(pos).astype(int)
        idx0.append(base % ref_grid.cells[i])
        frac.append(pos - base)
    out = np.zeros(grid.cells)
    for corner in range(1 << d):
        sel, w = [], None
        for i in range(d):
            hi = (corner >> i) & 1
            ids = (idx0[i] + hi) % ref_grid.cells[i]
            sel.append(ids)
            wi = frac[i] if hi else 1.0 - frac[i]
            shape = [1] * d
            shape[i] = -1
            w = wi.reshape(shape) if w is None else w * wi.reshape(shape)
        out = out + w * level[np.ix_(*sel)]
    return out


def fine_grid_reference(
    problem: Problem,
    h_ref: float,
    T: float,
    *,
    nu_override: Optional[float] = None,
    cfl_margin: float = 0.9,
    memory_limit_bytes: int = 2**31,
) -> FineGridReference:
    """Solve the value equation on a fine lattice to serve as the study oracle.

    Fails explicitly (with the sizes) when the space-time array would exceed
    ``memory_limit_bytes``.
    """
    params = select_scheme_params(
        problem, h_ref, T, mode="value_only", cfl_margin=cfl_margin, nu_override=nu_override
    )
    grid = params.grid
    need = 8 * (grid.K + 1) * grid.n_cells
    if need > memory_limit_bytes:
        raise MemoryError(
            f"reference solve needs {need} bytes for {grid.K + 1} levels x "
            f"{grid.cells} cells, over the limit {memory_limit_bytes}"
        )
    return FineGridReference(problem=problem, params=params, field=solve_value(problem, params))


def degenerate_nu_exponent(alpha: float) -> float:
    """Viscosity exponent for the degenerate-regime study: nu_h = h^(4a/(9+7a))."""
    return 4.0 * alpha / (9.0 + 7.0 * alpha)


@dataclass
class RefinementStudy:
    """Sup-norm distances to the fine reference per refinement level, with the
    least-squares order fit and the theoretical target exponent."""

    regime: str
    alpha: float
    rows: list[tuple[float, float, float, float]]  # (h, tau, nu_h, err)
    order: float
    intercept: float
    r2: float
    target: float
    exact: bool
    monotone: bool
    h_ref: float
    ref_self_err: float
    flags: list[str] = dc_field(default_factory=list)


def run_refinement_study(
    problem: Problem,
    h_list,
    alpha: float,
    regime: str,
    T: float,
    *,
    h_ref: Optional[float] = None,
    cfl_margin: float = 0.9,
    memory_limit_bytes: int = 2**31,
) -> RefinementStudy:
    """Distance-to-reference study over dyadically nested spatial steps.

    Needs at least 3 levels, each halving the previous h.  The reference is a
    solve at ``h_ref`` (default: the finest h / 4) using the same viscosity
    rule, validated first by a two-level self-consistency solve at 2 * h_ref.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError(f"need >= 3 refinement levels, got {len(h_list)}")
    for a, b in zip(h_list, h_list[1:]):
        if abs(b - a / 2.0) > 1e-12 * a:
            raise ValueError(f"h_list must halve at every level, got {a} -> {b}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if regime == "nondegenerate":
        if min(problem.bounds.sigma_inf) <= 0:
            raise ProblemError(
                "nondegenerate regime requires inf Sigma_i > 0 on every axis"
            )
        nu_of = lambda h: 0.0
        target = alpha / 2.0
    elif regime == "degenerate":
        if min(problem.bounds.sigma_inf) > 0:
            raise ProblemError("degenerate regime expects a diffusion touching zero")
        expo = degenerate_nu_exponent(alpha)
        nu_of = lambda h: h**expo
        target = 2.0 * alpha / (9.0 + 7.0 * alpha)
    else:
        raise ValueError(f"regime must be 'nondegenerate' or 'degenerate', got {regime!r}")

    h_min = min(h_list)
    if h_ref is None:
        h_ref = h_min / 4.0
    if h_ref > h_min / 4.0 + 1e-15:
        raise ValueError(f"h_ref must be <= min(h)/4 = {h_min / 4.0}, got {h_ref}")

    ref = fine_grid_reference(
        problem,
        h_ref,
        T,
        nu_override=nu_of(h_ref),
        cfl_margin=cfl_margin,
        memory_limit_bytes=memory_limit_bytes,
    )

    # two-level self-consistency of the oracle
    params2 = select_scheme_params(
        problem, 2.0 * h_ref, T, mode="value_only", cfl_margin=cfl_margin,
        nu_override=nu_of(2.0 * h_ref),
    )
    v2 = solve_value(problem, params2)
    ref_self_err = float(np.max(np.abs(v2.values - ref.sample_onto(params2.grid))))

    rows = []
    for h in h_list:
        params = select_scheme_params(
            problem, h, T, mode="value_only", cfl_margin=cfl_margin, nu_override=nu_of(h)
        )
        v = solve_value(problem, params)
        err = float(np.max(np.abs(v.values - ref.sample_onto(params.grid))))
        rows.append((h, params.tau, params.nu_h, err))

    b = problem.bounds
    scale = max(1.0, b.g_sup + b.c_sup * T)
    errs = [r[3] for r in rows]
    flags = []
    exact = all(e <= 1e-12 * scale for e in errs)
    monotone = all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    if not monotone and not exact:
        flags.append("errors not monotone in h")
    if ref_self_err > min(errs) and not exact:
        flags.append("reference self-consistency error exceeds finest study error")

    if exact:
        order = math.nan
        intercept = math.nan
        r2 = math.nan
    else:
        lx = np.log([r[0] for r in rows])
        ly = np.log(np.maximum(errs, 1e-300))
        order, intercept = np.polyfit(lx, ly, 1)
        fitted = order * lx + intercept
        ss_res = float(np.sum((ly - fitted) ** 2))
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
        order = float(order)
        intercept = float(intercept)

    return RefinementStudy(
        regime=regime,
        alpha=alpha,
        rows=rows,
        order=order,
        intercept=intercept,
        r2=r2,
        target=target,
        exact=exact,
        monotone=monotone,
        h_ref=h_ref,
        ref_self_err=ref_self_err,
        flags=flags,
    )


@dataclass
class MonotoneReport:
    """Worst cellwise ordering violations over seeded random ordered inputs."""

    trials: int
    terminal_pairs: int
    max_step_violation: float
    max_solve_violation: float
    scale: float
    seed: int
    passed: bool


def check_monotone_comparison(
    problem: Problem,
    params: SchemeParams,
    trials: int = 200,
    *,
    terminal_pairs: int = 3,
    seed: int = 0,
    amp: float = 1.0,
    tol: float = 1e-12,
) -> MonotoneReport:
    """For random ordered field pairs U <= V, assert both the frozen-policy and
    the value update preserve the order cellwise; for ordered terminal pairs,
    assert the full backward solves stay ordered at every level."""
    rng = np.random.default_rng(seed)
    grid = params.grid
    K = grid.K
    na, nb = len(problem.controls_a), len(problem.controls_b)
    max_step = 0.0
    scale = 1.0
    for _ in range(trials):
        base = amp * rng.standard_normal(grid.cells)
        gap = amp * rng.uniform(0.0, 1.0, grid.cells)
        U = Field(grid, base)
        V = Field(grid, base + gap)
        k = int(rng.integers(1, K + 1))
        t = float(grid.times[k])
        pol = PolicyField(
            grid,
            rng.integers(0, na, grid.cells),
            rng.integers(0, nb, grid.cells),
            t,
        )
        fu = step_frozen(problem, params, t, U, pol)
        fv = step_frozen(problem, params, t, V, pol)
        max_step = max(max_step, float(np.max(fu.values - fv.values)))
        scale = max(scale, float(np.max(np.abs(fu.values))), float(np.max(np.abs(fv.values))))
        vu = step_value(problem, params, t, U)
        vv = step_value(problem, params, t, V)
        max_step = max(max_step, float(np.max(vu.values - vv.values)))
        scale = max(scale, float(np.max(np.abs(vu.values))), float(np.max(np.abs(vv.values))))

    max_solve = 0.0
    for _ in range(terminal_pairs):
        g1 = amp * rng.standard_normal(grid.cells)
        g2 = g1 + amp * rng.uniform(0.0, 1.0, grid.cells)
        s1 = solve_value(problem, params, terminal_values=g1)
        s2 = solve_value(problem, params, terminal_values=g2)
        max_solve = max(max_solve, float(np.max(s1.values - s2.values)))
        scale = max(scale, float(np.max(np.abs(s1.values))), float(np.max(np.abs(s2.values))))

    passed = max_step <= tol * scale and max_solve <= tol * scale
    return MonotoneReport(
        trials=trials,
        terminal_pairs=terminal_pairs,
        max_step_violation=max_step,
        max_solve_violation=max_solve,
        scale=scale,
        seed=seed,
        passed=passed,
    )
