"""Built-in problems: periodic coefficients on a box, exact analytic bounds.

All builders return immutable :class:`~hjpi.problem.Problem` instances whose
coefficients are smooth and periodic on ``[0, box)^d``, so the periodic-torus
scheme needs no boundary closure.  Control sets are finite ordered samples of
the underlying compact sets; the sampling resolution is a builder parameter.
"""

from __future__ import annotations

import numpy as np

from .problem import Bounds, ControlSet, Problem, ProblemError

__all__ = [
    "unit_directions",
    "ball_points",
    "paper_example_potential",
    "paper_example",
    "paper_example_closed",
    "transport_convex",
    "nondegenerate_smooth",
    "degenerate_smooth",
    "REGISTRY",
    "build",
]

_TWO_PI = 2.0 * np.pi


def unit_directions(d: int, n_dirs: int = 8) -> np.ndarray:
    """Unit vectors sampling the sphere: +-1 in 1D, n_dirs angles in 2D,
    axes plus cube corners in 3D.  Near-zero components are snapped to 0 so
    axis-aligned directions are exact."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = _TWO_PI * np.arange(n_dirs) / n_dirs
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        pts[np.abs(pts) < 1e-12] = 0.0
        return pts
    axes = np.concatenate([np.eye(3), -np.eye(3)])
    corners = np.array(
        [[sx, sy, sz] for sx in (1.0, -1.0) for sy in (1.0, -1.0) for sz in (1.0, -1.0)]
    ) / np.sqrt(3.0)
    return np.concatenate([axes, corners])


def ball_points(d: int, n_dirs: int = 8) -> np.ndarray:
    """Sample of the closed unit ball: the origin first, then unit directions.
    Putting 0 first makes it the tie-break winner whenever p = 0."""
    return np.concatenate([np.zeros((1, d)), unit_directions(d, n_dirs)])


def _mean_last(values: np.ndarray) -> np.ndarray:
    return np.mean(values, axis=-1)


def paper_example_potential(x: np.ndarray, v_amp: float, box: float) -> np.ndarray:
    """The smooth periodic potential entering the two-branch running cost."""
    return v_amp * _mean_last(np.sin(_TWO_PI * np.asarray(x) / box))


def _paper_example_data(d, box, v_amp, g_amp, sigma0, n_dirs):
    if sigma0 <= 0:
        raise ProblemError("sigma0 must be positive")
    dirs = ball_points(d, n_dirs)
    controls_a = ControlSet(dirs)
    b_rows = [np.concatenate([[branch], e]) for branch in (1.0, 2.0) for e in dirs]
    controls_b = ControlSet(np.stack(b_rows))

    def potential(x):
        return paper_example_potential(x, v_amp, box)

    def cost(t, x, a, b):
        branch = b[..., 0]
        return potential(x) + (3.0 - 2.0 * branch)

    def drift(t, x, a, b):
        branch = b[..., :1]
        e = b[..., 1:]
        return np.where(branch == 1.0, a, e)

    def diffusion(t, x):
        return np.full(np.asarray(x).shape, sigma0)

    def terminal(x):
        return g_amp * _mean_last(np.cos(_TWO_PI * np.asarray(x) / box))

    bounds = Bounds(
        c_sup=1.0 + v_amp,
        f_sup=1.0,
        c_lip=v_amp * _TWO_PI / (box * np.sqrt(d)),
        f_lip=0.0,
        sigma_sup=(sigma0,) * d,
        sigma_inf=(sigma0,) * d,
        g_sup=g_amp,
    )
    return controls_a, controls_b, cost, drift, diffusion, terminal, bounds


def paper_example(
    d: int = 2,
    box: float = 1.0,
    v_amp: float = 0.1,
    g_amp: float = 0.1,
    sigma0: float = 0.25,
    n_dirs: int = 8,
) -> Problem:
    """Two-branch ball-control game with the nonconvex Hamiltonian
    max(|p| - 1, 1 - |p|) + V(x) over the sampled control sets.

    Player a picks a drift direction in the unit ball; player b picks a branch
    (1: the opponent steers, cost +1; 2: b steers via e, cost -1) together with
    a direction e.  Uniform diffusion ``sigma0`` on every axis.
    """
    ca, cb, cost, drift, diff, term, bounds = _paper_example_data(
        d, box, v_amp, g_amp, sigma0, n_dirs
    )
    return Problem(
        name="paper_example",
        d=d,
        box=(box,) * d,
        cost=cost,
        drift=drift,
        diffusion=diff,
        terminal=term,
        controls_a=ca,
        controls_b=cb,
        bounds=bounds,
    )


def paper_example_closed(
    d: int = 2,
    box: float = 1.0,
    v_amp: float = 0.1,
    g_amp: float = 0.1,
    sigma0: float = 0.25,
    n_dirs: int = 8,
) -> Problem:
    """Closed-form variant of :func:`paper_example`.

    The best responses are evaluated analytically (a = -p/|p|, b = branch 1
    with e = 0 for |p| <= 1, branch 2 with e = p/|p| otherwise), bypassing
    control sampling, so the Hamiltonian equals max(|p|-1, 1-|p|) + V(x) to
    machine precision.  Used to quantify control-discretisation error; the
    sampled sets are still attached for reference.  Policy iteration requires
    the sampled variant.
    """
    ca, cb, cost, drift, diff, term, bounds = _paper_example_data(
        d, box, v_amp, g_amp, sigma0, n_dirs
    )

    def exact_response(t, X, P):
        norm = np.sqrt(np.sum(P * P, axis=-1, keepdims=True))
        unit = np.where(norm > 0.0, P / np.where(norm > 0.0, norm, 1.0), 0.0)
        a = -unit
        low = norm <= 1.0
        e = np.where(low, 0.0, unit)
        b = np.concatenate([np.where(low, 1.0, 2.0), e], axis=-1)
        return a, b

    return Problem(
        name="paper_example_closed",
        d=d,
        box=(box,) * d,
        cost=cost,
        drift=drift,
        diffusion=diff,
        terminal=term,
        controls_a=ca,
        controls_b=cb,
        bounds=bounds,
        exact_response=exact_response,
    )


def transport_convex(
    d: int = 1,
    box: float = 1.0,
    c_amp: float = 0.5,
    curvature: float = 0.5,
    f0: float = 1.0,
    g_amp: float = 0.3,
    n_dirs: int = 8,
) -> Problem:
    """Single-player transport: no diffusion, drift f0 * a over the unit ball,
    quadratic control cost.  Exercises the artificial-viscosity path (the CFL
    selection must supply all of the monotonising diffusion)."""
    if f0 <= 0:
        raise ProblemError("f0 must be positive")
    controls_a = ControlSet(ball_points(d, n_dirs))
    controls_b = ControlSet(np.zeros((1, 1)))

    def cost(t, x, a, b):
        base = c_amp * _mean_last(np.cos(_TWO_PI * np.asarray(x) / box))
        return base + curvature * np.sum(a * a, axis=-1)

    def drift(t, x, a, b):
        return f0 * a

    def diffusion(t, x):
        return np.zeros(np.asarray(x).shape)

    def terminal(x):
        return g_amp * _mean_last(np.sin(_TWO_PI * np.asarray(x) / box))

    return Problem(
        name="transport_convex",
        d=d,
        box=(box,) * d,
        cost=cost,
        drift=drift,
        diffusion=diffusion,
        terminal=terminal,
        controls_a=controls_a,
        controls_b=controls_b,
        bounds=Bounds(
            c_sup=c_amp + curvature,
            f_sup=f0,
            c_lip=c_amp * _TWO_PI / (box * np.sqrt(d)),
            f_lip=0.0,
            sigma_sup=(0.0,) * d,
            sigma_inf=(0.0,) * d,
            g_sup=g_amp,
        ),
    )


def _scalar_game_controls(na, nb):
    return ControlSet(np.linspace(-1.0, 1.0, na)), ControlSet(np.linspace(-1.0, 1.0, nb))


def _scalar_game_coeffs(box, c_amp, q_a, q_b, mu_a, mu_b, g_amp, d):
    def cost(t, x, a, b):
        base = c_amp * _mean_last(np.sin(_TWO_PI * np.asarray(x) / box))
        return base + q_a * a[..., 0] ** 2 - q_b * b[..., 0] ** 2

    def drift(t, x, a, b):
        first = mu_a * a[..., 0] + mu_b * b[..., 0]
        comps = [first] + [np.zeros_like(first) for _ in range(d - 1)]
        return np.stack(comps, axis=-1)

    def terminal(x):
        return g_amp * _mean_last(np.sin(2.0 * _TWO_PI * np.asarray(x) / box))

    return cost, drift, terminal


def nondegenerate_smooth(
    d: int = 1,
    box: float = 1.0,
    s0: float = 0.5,
    s1: float = 0.25,
    mu_a: float = 0.6,
    mu_b: float = 0.4,
    q_a: float = 0.3,
    q_b: float = 0.3,
    c_amp: float = 0.5,
    g_amp: float = 0.3,
    na: int = 5,
    nb: int = 5,
) -> Problem:
    """Smooth two-player game with uniformly elliptic diffusion
    Sigma_i(x) = s0 + s1 cos(2 pi x_i / box), inf Sigma = s0 - s1 > 0."""
    if not 0 <= s1 < s0:
        raise ProblemError("need 0 <= s1 < s0 for a nondegenerate diffusion")
    controls_a, controls_b = _scalar_game_controls(na, nb)
    cost, drift, terminal = _scalar_game_coeffs(box, c_amp, q_a, q_b, mu_a, mu_b, g_amp, d)

    def diffusion(t, x):
        return s0 + s1 * np.cos(_TWO_PI * np.asarray(x) / box)

    return Problem(
        name="nondegenerate_smooth",
        d=d,
        box=(box,) * d,
        cost=cost,
        drift=drift,
        diffusion=diffusion,
        terminal=terminal,
        controls_a=controls_a,
        controls_b=controls_b,
        bounds=Bounds(
            c_sup=c_amp + max(q_a, q_b),
            f_sup=mu_a + mu_b,
            c_lip=c_amp * _TWO_PI / (box * np.sqrt(d)),
            f_lip=0.0,
            sigma_sup=(s0 + s1,) * d,
            sigma_inf=(s0 - s1,) * d,
            g_sup=g_amp,
        ),
    )


def degenerate_smooth(
    d: int = 1,
    box: float = 1.0,
    s: float = 0.5,
    mu_a: float = 0.6,
    mu_b: float = 0.4,
    q_a: float = 0.3,
    q_b: float = 0.3,
    c_amp: float = 0.5,
    g_amp: float = 0.3,
    na: int = 5,
    nb: int = 5,
) -> Problem:
    """Same game with Sigma_i(x) = s (1 - cos(2 pi x_i / box)) / 2, which
    touches zero: the diffusion is degenerate and sqrt(Sigma) stays Lipschitz."""
    if s <= 0:
        raise ProblemError("s must be positive")
    controls_a, controls_b = _scalar_game_controls(na, nb)
    cost, drift, terminal = _scalar_game_coeffs(box, c_amp, q_a, q_b, mu_a, mu_b, g_amp, d)

    def diffusion(t, x):
        return 0.5 * s * (1.0 - np.cos(_TWO_PI * np.asarray(x) / box))

    return Problem(
        name="degenerate_smooth",
        d=d,
        box=(box,) * d,
        cost=cost,
        drift=drift,
        diffusion=diffusion,
        terminal=terminal,
        controls_a=controls_a,
        controls_b=controls_b,
        bounds=Bounds(
            c_sup=c_amp + max(q_a, q_b),
            f_sup=mu_a + mu_b,
            c_lip=c_amp * _TWO_PI / (box * np.sqrt(d)),
            f_lip=0.0,
            sigma_sup=(s,) * d,
            sigma_inf=(0.0,) * d,
            g_sup=g_amp,
        ),
    )


REGISTRY = {
    "paper_example": paper_example,
    "paper_example_closed": paper_example_closed,
    "transport_convex": transport_convex,
    "nondegenerate_smooth": nondegenerate_smooth,
    "degenerate_smooth": degenerate_smooth,
}


def build(name: str, **params) -> Problem:
    """Instantiate a built-in problem by registry name."""
    try:
        builder = REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(REGISTRY))
        raise ProblemError(f"unknown problem '{name}'; known problems: {known}") from None
    return builder(**params)
