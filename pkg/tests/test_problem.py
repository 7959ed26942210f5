"""Lagrangian, best-response, Hamiltonian, and bounds-metadata tests."""

import numpy as np
import pytest
from conftest import brute_force_best_response, make_random_problem

from hjpi.problem import (
    Bounds,
    ControlSet,
    Problem,
    ProblemError,
    best_response,
    best_response_grid,
    estimate_bounds,
    hamiltonian,
    hamiltonian_grid,
    hamiltonian_lipschitz_check,
    lagrangian,
)
from hjpi.problems import (
    ball_points,
    build,
    paper_example,
    paper_example_closed,
    paper_example_potential,
)


def simple_transport_problem():
    """c = 0, f = (1, 0) regardless of controls, two dummy controls per side."""
    return Problem(
        name="simple",
        d=2,
        box=(1.0, 1.0),
        cost=lambda t, x, a, b: np.zeros(np.broadcast_shapes(
            np.asarray(x).shape[:-1], np.asarray(a).shape[:-1], np.asarray(b).shape[:-1]
        )),
        drift=lambda t, x, a, b: np.broadcast_to(
            np.array([1.0, 0.0]),
            np.broadcast_shapes(
                np.asarray(x).shape[:-1], np.asarray(a).shape[:-1], np.asarray(b).shape[:-1]
            ) + (2,),
        ),
        diffusion=lambda t, x: np.zeros(np.asarray(x).shape),
        terminal=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        controls_a=ControlSet([[0.0], [1.0]]),
        controls_b=ControlSet([[0.0], [1.0]]),
        bounds=Bounds(c_sup=0, f_sup=1, c_lip=0, f_lip=0,
                      sigma_sup=(0, 0), sigma_inf=(0, 0), g_sup=0),
    )


class TestControlSet:
    def test_rejects_empty(self):
        with pytest.raises(ProblemError):
            ControlSet(np.zeros((0, 1)))

    def test_rejects_duplicates(self):
        with pytest.raises(ProblemError):
            ControlSet([[1.0], [1.0]])

    def test_order_preserved(self):
        cs = ControlSet([[3.0], [1.0], [2.0]])
        assert cs.vector(0)[0] == 3.0
        assert len(cs) == 3


class TestLagrangian:
    def test_dot_product(self):
        p = simple_transport_problem()
        x = np.array([0.2, 0.3])
        assert lagrangian(p, 0.0, x, np.array([3.0, 4.0]), 0, 0) == 3.0

    def test_zero_gradient_returns_cost(self):
        p = simple_transport_problem()
        assert lagrangian(p, 0.0, np.array([0.1, 0.1]), np.zeros(2), 1, 1) == 0.0

    def test_paper_branch_one(self):
        # branch 1 cost is 1 + V(x); drift is a.  V=0 at x=0, a=(-1,0), p=(2,0)
        prob = paper_example(d=2)
        A = prob.controls_a.points
        B = prob.controls_b.points
        a_idx = next(i for i in range(len(A)) if np.allclose(A[i], [-1.0, 0.0]))
        b_idx = next(j for j in range(len(B)) if np.allclose(B[j], [1.0, 0.0, 0.0]))
        val = lagrangian(prob, 0.0, np.zeros(2), np.array([2.0, 0.0]), a_idx, b_idx)
        assert val == pytest.approx(-1.0, abs=1e-14)

    def test_index_out_of_range(self):
        p = simple_transport_problem()
        with pytest.raises(IndexError):
            lagrangian(p, 0.0, np.zeros(2), np.zeros(2), 5, 0)


class TestBestResponse:
    def test_paper_small_gradient(self):
        prob = paper_example(d=2)
        br = best_response(prob, 0.0, np.zeros(2), np.array([0.5, 0.0]))
        assert np.allclose(prob.controls_a.points[br.a_index], [-1.0, 0.0])
        # outer maximiser is branch 1 with e = 0
        np.testing.assert_allclose(prob.controls_b.points[br.b_index], [1.0, 0.0, 0.0])
        assert br.value == pytest.approx(0.5, abs=1e-14)

    def test_paper_zero_gradient(self):
        prob = paper_example(d=2)
        br = best_response(prob, 0.0, np.zeros(2), np.zeros(2))
        # a = 0 (first point of the ball sample wins the tie)
        np.testing.assert_allclose(prob.controls_a.points[br.a_index], [0.0, 0.0])
        assert br.value == pytest.approx(1.0, abs=1e-14)

    def test_matches_bruteforce_bitwise(self, rng):
        for _ in range(20):
            prob = make_random_problem(
                rng, d=int(rng.integers(1, 3)),
                na=int(rng.integers(1, 7)), nb=int(rng.integers(1, 7)),
            )
            for _ in range(50):
                t = float(rng.uniform(0, 1))
                x = rng.uniform(0, 1, prob.d)
                p = rng.normal(0, 2, prob.d)
                br = best_response(prob, t, x, p)
                ai, bi, val = brute_force_best_response(prob, t, x, p)
                assert (br.a_index, br.b_index) == (ai, bi)
                assert br.value == val  # bitwise

    def test_value_equals_lagrangian_at_selection(self, rng):
        prob = make_random_problem(rng, d=2, na=5, nb=4)
        x = rng.uniform(0, 1, 2)
        p = rng.normal(0, 1, 2)
        br = best_response(prob, 0.3, x, p)
        assert br.value == lagrangian(prob, 0.3, x, p, br.a_index, br.b_index)

    def test_saddle_inequalities_exact(self, rng):
        # L(a*, b) <= L(a, b) for every a; L(a*, b*) >= L(a_b*, b) for every b
        prob = make_random_problem(rng, d=1, na=6, nb=5)
        x = rng.uniform(0, 1, 1)
        p = rng.normal(0, 2, 1)
        t = 0.1
        br = best_response(prob, t, x, p)
        from hjpi.problem import control_tables, lagrangian_tables

        c_tab, f_tab = control_tables(prob, t, x.reshape(1, -1))
        L = lagrangian_tables(c_tab, f_tab, p.reshape(1, -1))[0]
        a_for_b = np.argmin(L, axis=0)
        inner = L[a_for_b, np.arange(L.shape[1])]
        for j in range(L.shape[1]):
            assert np.all(L[a_for_b[j], j] <= L[:, j])
            assert br.value >= inner[j]

    def test_determinism(self, rng):
        prob = make_random_problem(rng, d=2, na=4, nb=4)
        x = rng.uniform(0, 1, 2)
        p = rng.normal(0, 1, 2)
        first = best_response(prob, 0.5, x, p)
        for _ in range(5):
            again = best_response(prob, 0.5, x, p)
            assert (again.a_index, again.b_index, again.value) == (
                first.a_index, first.b_index, first.value,
            )

    def test_grid_path_matches_scalar(self, rng):
        prob = make_random_problem(rng, d=1, na=5, nb=3)
        X = rng.uniform(0, 1, (40, 1))
        P = rng.normal(0, 2, (40, 1))
        ai, bi, vals = best_response_grid(prob, 0.2, X, P)
        for k in range(40):
            br = best_response(prob, 0.2, X[k], P[k])
            assert (int(ai[k]), int(bi[k])) == (br.a_index, br.b_index)
            assert float(vals[k]) == br.value


class TestHamiltonian:
    def test_paper_value(self):
        prob = paper_example(d=2)
        assert hamiltonian(prob, 0.0, np.zeros(2), np.array([2.0, 0.0])) == pytest.approx(
            1.0, abs=1e-14
        )

    def test_constant_cost(self):
        from conftest import make_constant_cost_problem

        prob = make_constant_cost_problem(0.7, d=1)
        for p in (np.zeros(1), np.array([3.0]), np.array([-1.5])):
            assert hamiltonian(prob, 0.0, np.array([0.1]), p) == 0.7

    def test_matches_exhaustive(self, rng):
        prob = make_random_problem(rng, d=1, na=5, nb=5)
        for _ in range(30):
            x = rng.uniform(0, 1, 1)
            p = rng.normal(0, 2, 1)
            _, _, val = brute_force_best_response(prob, 0.4, x, p)
            assert hamiltonian(prob, 0.4, x, p) == val

    def test_closed_form_matches_analytic(self, rng):
        prob = paper_example_closed(d=2, v_amp=0.1)
        for _ in range(100):
            x = rng.uniform(0, 1, 2)
            p = rng.normal(0, 1.5, 2)
            got = hamiltonian(prob, 0.0, x, p)
            want = max(np.linalg.norm(p) - 1.0, 1.0 - np.linalg.norm(p)) + float(
                paper_example_potential(x, 0.1, 1.0)
            )
            assert got == pytest.approx(want, rel=1e-14, abs=1e-14)

    def test_lipschitz_in_p(self, rng):
        prob = make_random_problem(rng, d=2, na=4, nb=4)
        f_sup = prob.bounds.f_sup
        x = rng.uniform(0, 1, 2)
        for _ in range(50):
            p1 = rng.normal(0, 2, 2)
            p2 = rng.normal(0, 2, 2)
            lhs = abs(hamiltonian(prob, 0.2, x, p1) - hamiltonian(prob, 0.2, x, p2))
            assert lhs <= f_sup * np.linalg.norm(p1 - p2) * (1 + 1e-12) + 1e-14


class TestLipschitzCheck:
    def test_constant_coefficients(self):
        prob = simple_transport_problem()
        rep = hamiltonian_lipschitz_check(prob, 2000, seed=3)
        assert not rep.flagged
        assert rep.max_ratio <= 1.0 + 1e-9

    def test_builtin_problems(self):
        for name in ("paper_example", "transport_convex", "nondegenerate_smooth"):
            prob = build(name, d=1)
            rep = hamiltonian_lipschitz_check(prob, 3000, seed=11)
            assert not rep.flagged, f"{name}: ratio {rep.max_ratio}"

    def test_identical_pair_is_zero(self):
        prob = paper_example(d=1)
        x = np.array([0.25])
        p = np.array([0.7])
        assert hamiltonian(prob, 0.1, x, p) - hamiltonian(prob, 0.1, x, p) == 0.0


class TestEstimateBounds:
    def test_dominates_fresh_samples(self, rng):
        prob = make_random_problem(rng, d=1, na=3, nb=3)
        est = estimate_bounds(
            prob.cost, prob.drift, prob.diffusion, prob.terminal, prob.box,
            prob.controls_a, prob.controls_b, seed=5,
        )
        assert "sampled" in est.method
        X = rng.uniform(0, 1, (500, 1))
        A = prob.controls_a.points
        B = prob.controls_b.points
        c = prob.cost(0.3, X[:, None, None, :], A[None, :, None, :], B[None, None, :, :])
        assert np.max(np.abs(c)) <= est.c_sup * 1.001
        sig = np.broadcast_to(prob.diffusion(0.3, X), (500, 1))
        assert sig.min() >= min(est.sigma_inf) - 1e-12


class TestBallSampling:
    def test_zero_first(self):
        pts = ball_points(2, 8)
        np.testing.assert_array_equal(pts[0], [0.0, 0.0])
        norms = np.linalg.norm(pts[1:], axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-15)

    def test_axis_directions_exact(self):
        pts = ball_points(2, 8)
        assert any(np.array_equal(q, [-1.0, 0.0]) for q in pts)
        assert any(np.array_equal(q, [0.0, 1.0]) for q in pts)

    def test_exact_response_consistency(self, rng):
        # the closed-form selection plugged into c + p.f reproduces hamiltonian_grid
        prob = paper_example_closed(d=2)
        X = rng.uniform(0, 1, (20, 2))
        P = rng.normal(0, 2, (20, 2))
        H = hamiltonian_grid(prob, 0.0, X, P)
        a, b = prob.exact_response(0.0, X, P)
        want = prob.cost(0.0, X, a, b) + np.sum(P * prob.drift(0.0, X, a, b), axis=-1)
        np.testing.assert_allclose(H, want, atol=1e-14)
