"""Game data for the Bellman-Isaacs Hamiltonian and the pointwise sup-inf machinery.

A :class:`Problem` bundles the running cost c, drift f, diagonal diffusion
Sigma, terminal cost g, two finite control sets, and certified sup-norm /
Lipschitz metadata.  The Lagrangian is

    L(t, x, p)(a, b) = c(t, x, a, b) + p . f(t, x, a, b),

and the Hamiltonian is the sup over b of the inf over a of L.  Over the finite
(ordered) control sets both extrema are attained; ties are always broken by the
lowest stored index, at the inner argmin and at the outer argmax independently,
which makes every selection deterministic.

Coefficient callables follow one broadcasting contract (arrays of any leading
shape, trailing axis = vector dimension):

    cost(t, x, a, b)      -> (...,)        x: (..., d), a: (..., ma), b: (..., mb)
    drift(t, x, a, b)     -> (..., d)
    diffusion(t, x)       -> (..., d)      per-axis diagonal entries, >= 0
    terminal(x)           -> (...,)

``t`` is a scalar.  Problems with ``time_dependent=False`` promise that c, f
and Sigma ignore t; solvers then evaluate coefficient tables once per grid.
All problem data is immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ProblemError",
    "ControlSet",
    "Bounds",
    "Problem",
    "BestResponse",
    "control_tables",
    "lagrangian_tables",
    "lagrangian",
    "best_response",
    "best_response_grid",
    "hamiltonian",
    "hamiltonian_grid",
    "LipschitzReport",
    "hamiltonian_lipschitz_check",
    "estimate_bounds",
]


class ProblemError(ValueError):
    """Invalid problem data or an operation unsupported by this problem."""


class ControlSet:
    """Finite ordered list of control vectors; the order fixes all tie-breaking."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ProblemError(f"control set needs a non-empty (n, m) array, got shape {pts.shape}")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ProblemError("control set points must be distinct")
        pts = pts.copy()
        pts.setflags(write=False)
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def vector(self, i: int) -> np.ndarray:
        if not 0 <= i < len(self):
            raise IndexError(f"control index {i} out of range 0..{len(self) - 1}")
        return self.points[i]


@dataclass(frozen=True)
class Bounds:
    """Certified coefficient bounds.

    ``c_lip`` / ``f_lip`` are plain Lipschitz constants in (t, x) (distance
    |dt| + |dx|); the bound used by the Hamiltonian regularity check is the
    sup-plus-Lipschitz norm ``c_sup + c_lip`` (same for f).  ``method`` records
    how the numbers were obtained (analytic or sampled-and-inflated).
    """

    c_sup: float
    f_sup: float
    c_lip: float
    f_lip: float
    sigma_sup: tuple[float, ...]
    sigma_inf: tuple[float, ...]
    g_sup: float
    method: str = "analytic"

    def __post_init__(self):
        for name in ("c_sup", "f_sup", "c_lip", "f_lip", "g_sup"):
            if getattr(self, name) < 0:
                raise ProblemError(f"bound {name} must be nonnegative")
        object.__setattr__(self, "sigma_sup", tuple(float(s) for s in self.sigma_sup))
        object.__setattr__(self, "sigma_inf", tuple(float(s) for s in self.sigma_inf))
        if len(self.sigma_sup) != len(self.sigma_inf):
            raise ProblemError("sigma_sup and sigma_inf must have one entry per axis")
        for lo, hi in zip(self.sigma_inf, self.sigma_sup):
            if lo < 0 or hi < lo:
                raise ProblemError(f"need 0 <= inf Sigma_i <= sup Sigma_i, got [{lo}, {hi}]")

    @property
    def c_lip_norm(self) -> float:
        return self.c_sup + self.c_lip

    @property
    def f_lip_norm(self) -> float:
        return self.f_sup + self.f_lip


@dataclass(frozen=True, eq=False)
class Problem:
    """Immutable problem data; see the module docstring for the callable contract."""

    name: str
    d: int
    box: tuple[float, ...]
    cost: Callable
    drift: Callable
    diffusion: Callable
    terminal: Callable
    controls_a: ControlSet
    controls_b: ControlSet
    bounds: Bounds
    time_dependent: bool = False
    exact_response: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "box", tuple(float(b) for b in np.atleast_1d(self.box)))
        if len(self.box) != self.d:
            raise ProblemError(f"box needs {self.d} axis lengths, got {self.box}")
        if any(b <= 0 for b in self.box):
            raise ProblemError("box lengths must be positive")
        if len(self.bounds.sigma_sup) != self.d:
            raise ProblemError("bounds.sigma_sup must have one entry per axis")


@dataclass(frozen=True)
class BestResponse:
    """Selected control pair: inner minimiser over a, outer maximiser over b."""

    a_index: int
    b_index: int
    value: float


def control_tables(problem: Problem, t, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate c and f on every (point, a, b) triple.

    X is (n, d); returns ``c_tab`` of shape (n, na, nb) and ``f_tab`` of shape
    (n, na, nb, d).
    """
    A = problem.controls_a.points
    B = problem.controls_b.points
    n = X.shape[0]
    na, nb = len(problem.controls_a), len(problem.controls_b)
    Xb = X[:, None, None, :]
    Ab = A[None, :, None, :]
    Bb = B[None, None, :, :]
    c = np.asarray(problem.cost(t, Xb, Ab, Bb), dtype=np.float64)
    f = np.asarray(problem.drift(t, Xb, Ab, Bb), dtype=np.float64)
    c = np.broadcast_to(c, (n, na, nb))
    f = np.broadcast_to(f, (n, na, nb, problem.d))
    return c, f


def lagrangian_tables(c_tab: np.ndarray, f_tab: np.ndarray, P: np.ndarray) -> np.ndarray:
    """L = c + p . f with the dot product accumulated axis by axis (fixed order)."""
    L = c_tab + P[:, 0, None, None] * f_tab[..., 0]
    for i in range(1, f_tab.shape[-1]):
        L = L + P[:, i, None, None] * f_tab[..., i]
    return L


def best_response_grid(
    problem: Problem,
    t,
    X: np.ndarray,
    P: np.ndarray,
    tables: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised sup-inf selection at many points.

    Returns integer arrays (a_idx, b_idx) and the optimised Lagrangian value,
    all of shape (n,).  np.argmin / np.argmax return the first extremum, which
    implements the lowest-index tie rule exactly.
    """
    c_tab, f_tab = tables if tables is not None else control_tables(problem, t, X)
    L = lagrangian_tables(c_tab, f_tab, P)
    a_for_b = np.argmin(L, axis=1)
    inner = np.take_along_axis(L, a_for_b[:, None, :], axis=1)[:, 0, :]
    b_star = np.argmax(inner, axis=1)
    a_star = np.take_along_axis(a_for_b, b_star[:, None], axis=1)[:, 0]
    value = np.take_along_axis(inner, b_star[:, None], axis=1)[:, 0]
    return a_star, b_star, value


def best_response(problem: Problem, t, x, p) -> BestResponse:
    """Sup-inf selection at a single point (see :func:`best_response_grid`)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    p = np.asarray(p, dtype=np.float64).reshape(1, -1)
    a_idx, b_idx, value = best_response_grid(problem, t, x, p)
    return BestResponse(int(a_idx[0]), int(b_idx[0]), float(value[0]))


def lagrangian(problem: Problem, t, x, p, a_index: int, b_index: int) -> float:
    """c(t,x,a,b) + p . f(t,x,a,b) at the given control indices."""
    if not 0 <= a_index < len(problem.controls_a):
        raise IndexError(f"a_index {a_index} out of range")
    if not 0 <= b_index < len(problem.controls_b):
        raise IndexError(f"b_index {b_index} out of range")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    p = np.asarray(p, dtype=np.float64).reshape(1, -1)
    c_tab, f_tab = control_tables(problem, t, x)
    L = lagrangian_tables(c_tab, f_tab, p)
    return float(L[0, a_index, b_index])


def hamiltonian(problem: Problem, t, x, p) -> float:
    """sup_b inf_a L; uses the closed-form selection when the problem carries one."""
    if problem.exact_response is None:
        return best_response(problem, t, x, p).value
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    p = np.asarray(p, dtype=np.float64).reshape(1, -1)
    return float(hamiltonian_grid(problem, t, x, p)[0])


def hamiltonian_grid(
    problem: Problem,
    t,
    X: np.ndarray,
    P: np.ndarray,
    tables: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Hamiltonian at many points, shape (n,)."""
    if problem.exact_response is not None:
        a, b = problem.exact_response(t, X, P)
        c = np.asarray(problem.cost(t, X, a, b), dtype=np.float64)
        f = np.asarray(problem.drift(t, X, a, b), dtype=np.float64)
        H = c + P[:, 0] * f[:, 0]
        for i in range(1, problem.d):
            H = H + P[:, i] * f[:, i]
        return H
    return best_response_grid(problem, t, X, P, tables=tables)[2]


@dataclass
class LipschitzReport:
    """Sampled audit of the Hamiltonian's (t, x, p) modulus of continuity."""

    n_samples: int
    max_ratio: float
    zero_rhs_failures: int
    flagged: bool
    bounds_method: str


def hamiltonian_lipschitz_check(
    problem: Problem,
    n_samples: int = 10_000,
    *,
    seed: int = 0,
    t_max: float = 1.0,
    p_scale: float = 2.0,
    chunk: int = 100,
) -> LipschitzReport:
    """Check |H(t1,x1,p1) - H(t2,x2,p2)| against the declared-regularity bound.

    The bound is (||c||_Lip + ||f||_Lip min(|p1|,|p2|)) (|dt| + |dx|)
    + ||f||_inf |p1 - p2| with the sup-plus-Lipschitz norms from the problem
    bounds.  Reports the max observed lhs/rhs ratio over random sample pairs.
    """
    rng = np.random.default_rng(seed)
    b = problem.bounds
    lengths = np.asarray(problem.box)
    max_ratio = 0.0
    zero_rhs_failures = 0
    n_chunks = max(1, n_samples // chunk)
    for _ in range(n_chunks):
        t1, t2 = rng.uniform(0.0, t_max, size=2)
        X1 = rng.uniform(0.0, lengths, size=(chunk, problem.d))
        X2 = rng.uniform(0.0, lengths, size=(chunk, problem.d))
        P1 = rng.normal(0.0, p_scale, size=(chunk, problem.d))
        P2 = rng.normal(0.0, p_scale, size=(chunk, problem.d))
        H1 = hamiltonian_grid(problem, t1, X1, P1)
        H2 = hamiltonian_grid(problem, t2, X2, P2)
        lhs = np.abs(H1 - H2)
        n1 = np.linalg.norm(P1, axis=-1)
        n2 = np.linalg.norm(P2, axis=-1)
        dist = abs(t2 - t1) + np.linalg.norm(X2 - X1, axis=-1)
        rhs = (b.c_lip_norm + b.f_lip_norm * np.minimum(n1, n2)) * dist + b.f_sup * np.linalg.norm(P1 - P2, axis=-1)
        pos = rhs > 0
        if pos.any():
            max_ratio = max(max_ratio, float(np.max(lhs[pos] / rhs[pos])))
        zero_rhs_failures += int(np.count_nonzero(lhs[~pos] > 1e-12))
    return LipschitzReport(
        n_samples=n_chunks * chunk,
        max_ratio=max_ratio,
        zero_rhs_failures=zero_rhs_failures,
        flagged=(max_ratio > 1.0 + 1e-9) or zero_rhs_failures > 0,
        bounds_method=b.method,
    )


def estimate_bounds(
    cost: Callable,
    drift: Callable,
    diffusion: Callable,
    terminal: Callable,
    box,
    controls_a: ControlSet,
    controls_b: ControlSet,
    *,
    t_max: float = 1.0,
    n_space: int = 2048,
    n_pairs: int = 2048,
    seed: int = 0,
    inflation: float = 0.05,
) -> Bounds:
    """Estimate sup/Lipschitz metadata by dense sampling, inflated for safety.

    Sup norms are inflated by ``inflation``; the per-axis diffusion infimum is
    deflated by the same factor so that the reported bounds dominate every
    sampled value.  Intended for user-supplied coefficients without analytic
    bounds; built-in problems declare exact bounds instead.
    """
    rng = np.random.default_rng(seed)
    box = tuple(float(v) for v in np.atleast_1d(box))
    d = len(box)
    lengths = np.asarray(box)
    A = controls_a.points
    B = controls_b.points
    up = 1.0 + inflation
    down = 1.0 - inflation

    ts = rng.uniform(0.0, t_max, size=8)
    c_max = f_max = 0.0
    sig_max = np.zeros(d)
    sig_min = np.full(d, np.inf)
    for t in ts:
        X = rng.uniform(0.0, lengths, size=(n_space, d))
        c = np.asarray(cost(t, X[:, None, None, :], A[None, :, None, :], B[None, None, :, :]))
        f = np.asarray(drift(t, X[:, None, None, :], A[None, :, None, :], B[None, None, :, :]))
        sig = np.broadcast_to(np.asarray(diffusion(t, X)), (n_space, d))
        c_max = max(c_max, float(np.max(np.abs(c))))
        f_max = max(f_max, float(np.max(np.linalg.norm(np.broadcast_to(f, c.shape + (d,)), axis=-1))))
        sig_max = np.maximum(sig_max, sig.max(axis=0))
        sig_min = np.minimum(sig_min, sig.min(axis=0))

    # Lipschitz constants from difference quotients between nearby sample pairs
    c_lip = f_lip = 0.0
    for t in ts[:4]:
        t2 = t + rng.uniform(0.0, 0.05)
        X1 = rng.uniform(0.0, lengths, size=(n_pairs, d))
        X2 = X1 + rng.normal(0.0, 0.02 * lengths.min(), size=(n_pairs, d))
        dist = abs(t2 - t) + np.linalg.norm(X2 - X1, axis=-1)
        for ai in range(min(len(controls_a), 4)):
            for bi in range(min(len(controls_b), 4)):
                a = A[ai]
                bb = B[bi]
                dc = np.abs(np.asarray(cost(t2, X2, a, bb)) - np.asarray(cost(t, X1, a, bb)))
                df = np.linalg.norm(
                    np.asarray(drift(t2, X2, a, bb)) - np.asarray(drift(t, X1, a, bb)), axis=-1
                )
                good = dist > 1e-12
                c_lip = max(c_lip, float(np.max(dc[good] / dist[good])))
                f_lip = max(f_lip, float(np.max(df[good] / dist[good])))

    Xg = rng.uniform(0.0, lengths, size=(n_space, d))
    g_max = float(np.max(np.abs(np.asarray(terminal(Xg)))))
    return Bounds(
        c_sup=c_max * up,
        f_sup=f_max * up,
        c_lip=c_lip * up,
        f_lip=f_lip * up,
        sigma_sup=tuple(sig_max * up),
        sigma_inf=tuple(np.maximum(0.0, sig_min * down)),
        g_sup=g_max * up,
        method=f"sampled(n_space={n_space},n_pairs={n_pairs},seed={seed},inflation={inflation:g})",
    )
