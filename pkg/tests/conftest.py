"""Shared builders for the test suite: stripped-down and randomized problems."""

import numpy as np
import pytest

from hjpi.problem import Bounds, ControlSet, Problem

TWO_PI = 2.0 * np.pi


def make_zero_problem(d=1, box=1.0):
    """Singleton controls, c = f = Sigma = g = 0: isolates the stencil arithmetic."""
    return Problem(
        name="zero",
        d=d,
        box=(box,) * d,
        cost=lambda t, x, a, b: np.zeros(np.asarray(x).shape[:-1]),
        drift=lambda t, x, a, b: np.zeros(np.asarray(x).shape),
        diffusion=lambda t, x: np.zeros(np.asarray(x).shape),
        terminal=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        controls_a=ControlSet([[0.0]]),
        controls_b=ControlSet([[0.0]]),
        bounds=Bounds(
            c_sup=0.0, f_sup=0.0, c_lip=0.0, f_lip=0.0,
            sigma_sup=(0.0,) * d, sigma_inf=(0.0,) * d, g_sup=0.0,
        ),
    )


def make_constant_cost_problem(kappa, d=1, box=1.0, sigma0=0.0, g0=0.0):
    """Singleton controls, c = kappa, f = 0, Sigma = sigma0, g = g0."""
    return Problem(
        name="constant_cost",
        d=d,
        box=(box,) * d,
        cost=lambda t, x, a, b: np.full(np.asarray(x).shape[:-1], float(kappa)),
        drift=lambda t, x, a, b: np.zeros(np.asarray(x).shape),
        diffusion=lambda t, x: np.full(np.asarray(x).shape, float(sigma0)),
        terminal=lambda x: np.full(np.asarray(x).shape[:-1], float(g0)),
        controls_a=ControlSet([[0.0]]),
        controls_b=ControlSet([[0.0]]),
        bounds=Bounds(
            c_sup=abs(kappa), f_sup=0.0, c_lip=0.0, f_lip=0.0,
            sigma_sup=(sigma0,) * d, sigma_inf=(sigma0,) * d, g_sup=abs(g0),
        ),
    )


def make_random_problem(rng, d=1, na=4, nb=3, box=1.0):
    """Random trig-in-space, linear-in-control coefficients with dominating
    analytic bounds; constant nondegenerate diffusion per axis."""
    ma, mb = 2, 2
    A = ControlSet(rng.uniform(-1.0, 1.0, (na, ma)))
    B = ControlSet(rng.uniform(-1.0, 1.0, (nb, mb)))
    c0 = float(rng.uniform(-0.5, 0.5))
    gamma = rng.uniform(-0.5, 0.5, d)
    u_a = rng.uniform(-0.5, 0.5, ma)
    w_b = rng.uniform(-0.5, 0.5, mb)
    rho = rng.uniform(-0.5, 0.5, d)
    zeta = rng.uniform(-0.3, 0.3, d)
    Ua = rng.uniform(-0.5, 0.5, (d, ma))
    Wb = rng.uniform(-0.5, 0.5, (d, mb))
    sig = rng.uniform(0.2, 0.5, d)
    g_amp = 0.2

    def cost(t, x, a, b):
        xs = np.sin(TWO_PI * np.asarray(x) / box)
        return (
            c0
            + np.sum(gamma * xs, axis=-1)
            + np.sum(u_a * a, axis=-1)
            + np.sum(w_b * b, axis=-1)
        )

    def drift(t, x, a, b):
        xs = np.sin(TWO_PI * np.asarray(x) / box)
        ca = np.sum(Ua * a[..., None, :], axis=-1)
        cb = np.sum(Wb * b[..., None, :], axis=-1)
        return rho + zeta * xs + ca + cb

    def diffusion(t, x):
        return np.broadcast_to(sig, np.asarray(x).shape)

    def terminal(x):
        return g_amp * np.mean(np.cos(TWO_PI * np.asarray(x) / box), axis=-1)

    f_axis_sup = np.abs(rho) + np.abs(zeta) + np.sum(np.abs(Ua), axis=1) + np.sum(np.abs(Wb), axis=1)
    bounds = Bounds(
        c_sup=abs(c0) + float(np.sum(np.abs(gamma)) + np.sum(np.abs(u_a)) + np.sum(np.abs(w_b))),
        f_sup=float(np.linalg.norm(f_axis_sup)),
        c_lip=float(TWO_PI / box * np.linalg.norm(gamma)),
        f_lip=float(TWO_PI / box * np.linalg.norm(zeta)),
        sigma_sup=tuple(sig),
        sigma_inf=tuple(sig),
        g_sup=g_amp,
    )
    return Problem(
        name="random",
        d=d,
        box=(box,) * d,
        cost=cost,
        drift=drift,
        diffusion=diffusion,
        terminal=terminal,
        controls_a=A,
        controls_b=B,
        bounds=bounds,
    )


def brute_force_best_response(problem, t, x, p):
    """Independent exhaustive sup-inf: pure-python double loop with the same
    per-pair arithmetic order (c, then + p_i * f_i axis by axis)."""
    A = problem.controls_a.points
    B = problem.controls_b.points
    na, nb, d = len(A), len(B), problem.d
    X = np.asarray(x, dtype=np.float64).reshape(1, 1, 1, -1)
    c = np.broadcast_to(
        np.asarray(problem.cost(t, X, A[None, :, None, :], B[None, None, :, :]), dtype=np.float64),
        (1, na, nb),
    )[0]
    f = np.broadcast_to(
        np.asarray(problem.drift(t, X, A[None, :, None, :], B[None, None, :, :]), dtype=np.float64),
        (1, na, nb, d),
    )[0]
    best_a = best_b = -1
    best_val = None
    for j in range(nb):
        min_a = -1
        min_val = None
        for i in range(na):
            val = c[i, j]
            for k in range(d):
                val = val + p[k] * f[i, j, k]
            if min_val is None or val < min_val:
                min_val = val
                min_a = i
        if best_val is None or min_val > best_val:
            best_val = min_val
            best_b = j
            best_a = min_a
    return best_a, best_b, float(best_val)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
