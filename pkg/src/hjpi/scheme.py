"""Explicit monotone space-time scheme: viscosity/CFL selection and backward solvers.

One backward step from time t to t - tau is

    F[U](x) = U(x) + tau * rate(t, x, grad_h U(x))
                   + (tau / 2) * sum_i (Sigma_i(t, x) + nu_h) * D2_i U(x)

where ``rate`` is either the frozen-policy Lagrangian L(t,x,p)(a,b) or the
sup-inf Hamiltonian H(t,x,p).  Expanding the central gradient and second
differences shows the update is an affine combination of neighbour values with
weights

    center    = 1 - (tau/h^2) * sum_i (Sigma_i + nu_h)
    plus_i    = (tau / (2 h^2)) * ( h f_i + Sigma_i + nu_h)
    minus_i   = (tau / (2 h^2)) * (-h f_i + Sigma_i + nu_h)

plus tau * c.  The scheme is monotone (and the discrete comparison principle
holds) exactly when all weights are nonnegative, i.e. when

    (i)   nu_h + Sigma_i(t,x) >= h |f_i(t,x,a,b)|      for all t, x, a, b, i
    (ii)  d nu_h + sup_x sum_i Sigma_i(t,x) <= h^2/tau.

Policy iteration additionally needs the time step small against the coefficient
sup norms:

    (iii) d tau max_i sup |Sigma_i| <= 4 h^2
    (iv)  96 tau max(||c||_inf^2, 2 d ||f||_inf^2) <= lambda_h

with lambda_h = min_i inf Sigma_i + nu_h > 0.  ``select_scheme_params``
chooses nu_h and tau to satisfy these and ``certify_conditions`` re-verifies
them by exhaustive evaluation over the grid and control sets; a violation is a
hard error.

Each backward step is a pure map from one level to the previous one: cells are
independent and the per-cell arithmetic order is fixed, so results do not
depend on any degree of parallelism.  Time levels are strictly sequential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .grid import (
    Field,
    Grid,
    GridError,
    SpaceTimeField,
    central_gradient_array,
    second_diff_array,
)
from .problem import (
    Problem,
    ProblemError,
    best_response_grid,
    control_tables,
    hamiltonian_grid,
)

if TYPE_CHECKING:  # pragma: no cover - type-only import, pi imports scheme at runtime
    from .pi import PolicyField

__all__ = [
    "CflError",
    "MonotonicityError",
    "NumericError",
    "SchemeParams",
    "StencilWeights",
    "select_scheme_params",
    "certify_conditions",
    "stencil_weights",
    "step_frozen",
    "step_value",
    "solve_value",
    "solve_frozen",
    "level_tables",
    "sigma_table",
]


class CflError(RuntimeError):
    """A step-size / viscosity condition cannot be met or failed certification."""


class MonotonicityError(RuntimeError):
    """A stencil weight came out negative: the monotone condition is violated."""


class NumericError(RuntimeError):
    """A step produced a non-finite value; carries the time and cell location."""

    def __init__(self, message, t=None, cell=None):
        super().__init__(message)
        self.t = t
        self.cell = cell


@dataclass(frozen=True)
class SchemeParams:
    """Accepted step sizes and certified viscosity for one problem/grid pair.

    lambda_h = min_i inf Sigma_i + nu_h and Lambda_h = max_i sup Sigma_i + nu_h
    bracket the effective diffusion coefficients Sigma_i + nu_h.
    ``mode`` is "value_only" or "pi"; only pi-mode params may drive policy
    iteration.
    """

    grid: Grid
    nu_h: float
    lambda_h: float
    Lambda_h: float
    cfl_margin: float
    mode: str

    def __post_init__(self):
        if self.mode not in ("value_only", "pi"):
            raise ValueError(f"mode must be 'value_only' or 'pi', got {self.mode!r}")
        if self.nu_h < 0:
            raise CflError(f"nu_h must be nonnegative, got {self.nu_h}")
        if not 0.0 < self.cfl_margin <= 1.0:
            raise CflError(f"cfl_margin must lie in (0, 1], got {self.cfl_margin}")
        if self.lambda_h < 0.0 or self.Lambda_h < self.lambda_h:
            raise CflError(
                f"need 0 <= lambda_h <= Lambda_h, got lambda_h={self.lambda_h}, "
                f"Lambda_h={self.Lambda_h}"
            )
        if self.mode == "pi" and not self.lambda_h > 0.0:
            raise CflError("PI requires positive lambda_h (add viscosity or diffusion)")

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def tau(self) -> float:
        return self.grid.tau


@dataclass
class StencilWeights:
    """Affine update coefficients at one cell: center, and plus/minus per axis."""

    center: float
    plus: np.ndarray
    minus: np.ndarray


def _cells_for(problem: Problem, h: float) -> tuple[int, ...]:
    cells = []
    for L in problem.box:
        n = round(L / h)
        if n < 3 or abs(n * h - L) > 1e-9 * L:
            raise CflError(
                f"h={h!r} does not tile the box length {L!r} with >= 3 cells"
            )
        cells.append(n)
    return tuple(cells)


def select_scheme_params(
    problem: Problem,
    h: float,
    T: float,
    mode: str = "value_only",
    *,
    cfl_margin: float = 0.9,
    nu_override: Optional[float] = None,
    nu_scale: Optional[float] = None,
    certify: bool = True,
) -> SchemeParams:
    """Choose the artificial viscosity and time step for the given spatial step.

    Default nu_h is the tightest value making the monotone condition (i) hold
    for the declared bounds, inflated by 1/cfl_margin; ``nu_override`` sets it
    directly and ``nu_scale`` sets nu_h = nu_scale * h.  tau is the largest
    step allowed by (ii) scaled by cfl_margin, additionally capped by (iii) and
    (iv) in pi mode, then rounded down so T/tau is an integer.
    """
    if not 0.0 < h < 1.0:
        raise CflError(f"h must lie in (0, 1), got {h}")
    if nu_override is not None and nu_scale is not None:
        raise CflError("give at most one of nu_override and nu_scale")
    b = problem.bounds
    d = problem.d
    cells = _cells_for(problem, h)

    nu_tight = max(0.0, max(h * b.f_sup - lo for lo in b.sigma_inf))
    if nu_override is not None:
        nu = float(nu_override)
        if nu < 0:
            raise CflError(f"nu_h override must be nonnegative, got {nu}")
    elif nu_scale is not None:
        nu = float(nu_scale) * h
    else:
        nu = nu_tight / cfl_margin if nu_tight > 0 else 0.0

    lambda_h = min(b.sigma_inf) + nu
    Lambda_h = max(b.sigma_sup) + nu
    sig_total = sum(b.sigma_sup)

    caps = [T]
    denom = d * nu + sig_total
    if denom > 0:
        caps.append(cfl_margin * h * h / denom)
    if mode == "pi":
        if lambda_h <= 0:
            raise CflError(
                "PI requires positive lambda_h: min_i inf Sigma_i + nu_h = 0 "
                f"(nu_h={nu}, inf Sigma={min(b.sigma_inf)})"
            )
        sig_max = max(b.sigma_sup)
        if sig_max > 0:
            caps.append(4.0 * h * h / (d * sig_max))
        m = max(b.c_sup**2, 2.0 * d * b.f_sup**2)
        if m > 0:
            caps.append(lambda_h / (96.0 * m))
    elif mode != "value_only":
        raise ValueError(f"mode must be 'value_only' or 'pi', got {mode!r}")

    tau0 = min(caps)
    if not tau0 > 0:
        raise CflError(f"no positive time step possible (caps: {caps})")
    K = max(1, math.ceil(T / tau0 - 1e-12))
    tau = T / K
    while tau >= 1.0:
        K += 1
        tau = T / K

    params = SchemeParams(
        grid=Grid(d=d, h=h, tau=tau, T=T, cells=cells),
        nu_h=nu,
        lambda_h=lambda_h,
        Lambda_h=Lambda_h,
        cfl_margin=cfl_margin,
        mode=mode,
    )
    if certify:
        certify_conditions(problem, params)
    return params


def _certify_times(problem: Problem, grid: Grid) -> np.ndarray:
    return grid.times if problem.time_dependent else grid.times[-1:]


def certify_conditions(problem: Problem, params: SchemeParams) -> None:
    """Exhaustively re-verify the monotone and (in pi mode) smallness conditions
    over the grid, control sets and time levels.  Also checks that the declared
    bounds dominate every sampled coefficient value.  Raises CflError (or
    ProblemError for bound violations) quoting the failing inequality."""
    grid = params.grid
    b = problem.bounds
    d, h, tau, nu = problem.d, grid.h, grid.tau, params.nu_h
    slack = 1e-12

    for t in _certify_times(problem, grid):
        c_tab, f_tab, sig = level_tables(problem, grid, float(t))
        if sig.min() < -1e-12:
            raise ProblemError(
                f"diffusion must be nonnegative; min sampled Sigma = {sig.min():.17g}"
            )
        # declared bounds must dominate the sampled coefficients
        c_max = float(np.max(np.abs(c_tab)))
        if c_max > b.c_sup * (1 + 1e-9) + 1e-15:
            raise ProblemError(
                f"declared ||c||_inf={b.c_sup:.17g} smaller than sampled {c_max:.17g}"
            )
        f_norm = float(np.max(np.sqrt(np.sum(f_tab * f_tab, axis=-1))))
        if f_norm > b.f_sup * (1 + 1e-9) + 1e-15:
            raise ProblemError(
                f"declared ||f||_inf={b.f_sup:.17g} smaller than sampled {f_norm:.17g}"
            )
        for i in range(d):
            lo, hi = float(sig[:, i].min()), float(sig[:, i].max())
            if lo < b.sigma_inf[i] - 1e-12 or hi > b.sigma_sup[i] + 1e-12:
                raise ProblemError(
                    f"declared Sigma_{i + 1} bounds [{b.sigma_inf[i]:.17g}, "
                    f"{b.sigma_sup[i]:.17g}] do not contain sampled [{lo:.17g}, {hi:.17g}]"
                )

        # monotone condition (i): nu_h + Sigma_i >= h |f_i| pointwise
        for i in range(d):
            lhs = nu + sig[:, i][:, None, None]
            rhs = h * np.abs(f_tab[..., i])
            gap = float(np.min(lhs - rhs))
            if gap < -slack * max(1.0, h * b.f_sup):
                k = np.unravel_index(int(np.argmin(lhs - rhs)), rhs.shape)
                raise CflError(
                    "monotone condition violated on axis "
                    f"{i + 1} at t={float(t):.17g}, cell={k[0]}, controls=({k[1]},{k[2]}): "
                    f"nu_h + Sigma_i = {float(lhs[k[0], 0, 0]):.17g} < "
                    f"h*|f_i| = {float(rhs[k]):.17g}"
                )

        # monotone condition (ii): d nu_h + sup_x sum_i Sigma_i <= h^2/tau
        sig_sum = float(np.max(np.sum(sig, axis=1)))
        lhs2 = d * nu + sig_sum
        rhs2 = h * h / tau
        if lhs2 > rhs2 * (1 + slack):
            raise CflError(
                f"CFL condition violated at t={float(t):.17g}: d*nu_h + sup sum_i Sigma_i = "
                f"{lhs2:.17g} > h^2/tau = {rhs2:.17g}"
            )

    if params.mode == "pi":
        sig_max = max(b.sigma_sup)
        lhs3 = d * tau * sig_max
        rhs3 = 4.0 * h * h
        if lhs3 > rhs3 * (1 + slack):
            raise CflError(
                f"PI step-size condition violated: d*tau*max_i sup Sigma_i = "
                f"{lhs3:.17g} > 4 h^2 = {rhs3:.17g}"
            )
        m = max(b.c_sup**2, 2.0 * d * b.f_sup**2)
        lhs4 = 96.0 * tau * m
        if lhs4 > params.lambda_h * (1 + slack):
            raise CflError(
                f"PI smallness condition violated: 96*tau*max(||c||^2, 2d||f||^2) = "
                f"{lhs4:.17g} > lambda_h = {params.lambda_h:.17g}"
            )
        lhs5 = d * params.Lambda_h * tau
        if lhs5 > rhs3 * (1 + slack):
            raise CflError(
                f"gradient-energy condition violated: d*Lambda_h*tau = {lhs5:.17g} "
                f"> 4 h^2 = {rhs3:.17g}"
            )


@lru_cache(maxsize=6)
def _static_tables(problem: Problem, grid: Grid):
    c_tab, f_tab = control_tables(problem, grid.T, grid.points_flat)
    sig = _eval_sigma(problem, grid.T, grid)
    c_tab = np.ascontiguousarray(c_tab)
    f_tab = np.ascontiguousarray(f_tab)
    for arr in (c_tab, f_tab, sig):
        arr.setflags(write=False)
    return c_tab, f_tab, sig


def _eval_sigma(problem: Problem, t: float, grid: Grid) -> np.ndarray:
    sig = np.asarray(problem.diffusion(t, grid.points_flat), dtype=np.float64)
    return np.ascontiguousarray(np.broadcast_to(sig, (grid.n_cells, problem.d)))


def level_tables(problem: Problem, grid: Grid, t: float):
    """(c_tab, f_tab, sigma) on the whole lattice at time t.

    For time-independent problems the tables are built once per (problem, grid)
    pair and reused across levels and iterations.
    """
    if problem.time_dependent:
        c_tab, f_tab = control_tables(problem, t, grid.points_flat)
        return c_tab, f_tab, _eval_sigma(problem, t, grid)
    return _static_tables(problem, grid)


def sigma_table(problem: Problem, grid: Grid, t: float) -> np.ndarray:
    """Per-axis diffusion entries on the lattice at time t, shape (n_cells, d)."""
    return level_tables(problem, grid, t)[2]


def stencil_weights(
    problem: Problem, params: SchemeParams, t, x, a_index: int, b_index: int
) -> StencilWeights:
    """Update weights at one point for the frozen control pair; all weights must
    come out nonnegative under certified params, else MonotonicityError."""
    a = problem.controls_a.vector(a_index)
    bb = problem.controls_b.vector(b_index)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    sig = np.asarray(problem.diffusion(t, x), dtype=np.float64).reshape(-1)
    sig = np.broadcast_to(sig, (problem.d,))
    fv = np.asarray(problem.drift(t, x, a, bb), dtype=np.float64).reshape(-1)
    M = sig + params.nu_h
    h, tau = params.h, params.tau
    hh = h * h
    center = 1.0 - tau / hh * float(np.sum(M))
    plus = tau / (2.0 * hh) * (h * fv + M)
    minus = tau / (2.0 * hh) * (-h * fv + M)
    low = min(center, float(plus.min()), float(minus.min()))
    if low < -1e-12:
        raise MonotonicityError(
            f"monotonicity violated: negative stencil weight {low:.17g} at t={t}, "
            f"x={x.tolist()}, controls=({a_index},{b_index})"
        )
    return StencilWeights(center=center, plus=plus, minus=minus)


def _advance(params: SchemeParams, t, values: np.ndarray, rate: np.ndarray, sig: np.ndarray) -> np.ndarray:
    grid = params.grid
    tau, h = grid.tau, grid.h
    diff = np.zeros_like(values)
    for i in range(grid.d):
        M_i = (sig[:, i] + params.nu_h).reshape(grid.cells)
        diff = diff + M_i * second_diff_array(values, h, i)
    out = values + tau * rate.reshape(grid.cells) + 0.5 * tau * diff
    if not np.isfinite(out).all():
        flat = np.isfinite(out.reshape(-1))
        cell = np.unravel_index(int(np.argmin(flat)), grid.cells)
        raise NumericError(
            f"non-finite value produced at t={t}, cell={tuple(int(c) for c in cell)}",
            t=t,
            cell=tuple(int(c) for c in cell),
        )
    return out


def _check_same_grid(params: SchemeParams, field: Field) -> None:
    if field.grid != params.grid:
        raise GridError("field grid does not match scheme params grid")


def _gradient_flat(values: np.ndarray, h: float, d: int) -> np.ndarray:
    grad = central_gradient_array(values, h)
    return grad.reshape(d, -1).T  # (n, d)


def step_frozen(
    problem: Problem, params: SchemeParams, t, field: Field, policy: "PolicyField"
) -> Field:
    """One backward step with the per-cell frozen control pair from ``policy``."""
    _check_same_grid(params, field)
    grid = params.grid
    if policy.grid != grid:
        raise GridError("policy grid does not match scheme params grid")
    if policy.t is not None and abs(policy.t - t) > 1e-9 * max(1.0, grid.T):
        raise ValueError(f"policy is tagged for t={policy.t}, stepping at t={t}")
    c_tab, f_tab, sig = level_tables(problem, grid, t)
    n = grid.n_cells
    a_idx = policy.a_idx.reshape(-1)
    b_idx = policy.b_idx.reshape(-1)
    if a_idx.min() < 0 or a_idx.max() >= len(problem.controls_a):
        raise IndexError("policy a indices out of range for the control set")
    if b_idx.min() < 0 or b_idx.max() >= len(problem.controls_b):
        raise IndexError("policy b indices out of range for the control set")
    flat = np.arange(n)
    cvals = c_tab[flat, a_idx, b_idx]
    fvals = f_tab[flat, a_idx, b_idx, :]
    P = _gradient_flat(field.values, grid.h, grid.d)
    rate = cvals + P[:, 0] * fvals[:, 0]
    for i in range(1, grid.d):
        rate = rate + P[:, i] * fvals[:, i]
    return Field(grid, _advance(params, t, field.values, rate, sig))


def step_value(problem: Problem, params: SchemeParams, t, field: Field) -> Field:
    """One backward step with the per-cell best response to the current gradient."""
    _check_same_grid(params, field)
    grid = params.grid
    c_tab, f_tab, sig = level_tables(problem, grid, t)
    P = _gradient_flat(field.values, grid.h, grid.d)
    H = hamiltonian_grid(problem, t, grid.points_flat, P, tables=(c_tab, f_tab))
    return Field(grid, _advance(params, t, field.values, H, sig))


def _terminal_values(problem: Problem, grid: Grid, terminal_values) -> np.ndarray:
    if terminal_values is None:
        g = np.asarray(problem.terminal(grid.points_flat), dtype=np.float64)
        return g.reshape(grid.cells)
    g = np.asarray(terminal_values, dtype=np.float64)
    if g.shape != grid.cells:
        g = g.reshape(grid.cells)
    return g


def solve_value(
    problem: Problem, params: SchemeParams, terminal_values=None
) -> SpaceTimeField:
    """Backward induction for the sup-inf value: level K holds the terminal data,
    each earlier level is one :func:`step_value`; this is the fixed point that
    policy iteration is measured against."""
    grid = params.grid
    K = grid.K
    levels = np.empty((K + 1,) + grid.cells)
    fld = Field(grid, _terminal_values(problem, grid, terminal_values))
    levels[K] = fld.values
    for k in range(K, 0, -1):
        t = float(grid.times[k])
        try:
            fld = step_value(problem, params, t, fld)
        except NumericError as err:
            raise NumericError(
                f"value solve failed stepping level {k} -> {k - 1}: {err}",
                t=err.t,
                cell=err.cell,
            ) from err
        levels[k - 1] = fld.values
    return SpaceTimeField(grid, levels)


def solve_frozen(
    problem: Problem,
    params: SchemeParams,
    policies: Sequence["PolicyField"],
    terminal_values=None,
) -> SpaceTimeField:
    """Policy evaluation: backward induction with frozen per-level policies.

    ``policies[k-1]`` is used when stepping from level k (time k*tau) down to
    k - 1, matching the levels tau, ..., T.
    """
    grid = params.grid
    K = grid.K
    if len(policies) != K:
        raise ValueError(f"need one policy per stepped level: {K}, got {len(policies)}")
    levels = np.empty((K + 1,) + grid.cells)
    fld = Field(grid, _terminal_values(problem, grid, terminal_values))
    levels[K] = fld.values
    for k in range(K, 0, -1):
        t = float(grid.times[k])
        try:
            fld = step_frozen(problem, params, t, fld, policies[k - 1])
        except NumericError as err:
            raise NumericError(
                f"policy evaluation failed stepping level {k} -> {k - 1}: {err}",
                t=err.t,
                cell=err.cell,
            ) from err
        levels[k - 1] = fld.values
    return SpaceTimeField(grid, levels)
