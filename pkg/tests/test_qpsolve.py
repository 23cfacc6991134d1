"""QP solver and quadratic-minus-log solver against independent oracles."""

import numpy as np
import pytest

from quantfolio.errors import EngineError, NotPositiveDefiniteError
from quantfolio.qpsolve import (
    DenseQuad,
    QpProblem,
    QpSolution,
    StructuredQuad,
    active_kernels,
    python_kernels,
    solve_qp,
    solve_quad_log,
)

BACKENDS = [python_kernels()]
if active_kernels() is not python_kernels():
    BACKENDS.append(active_kernels())


def simplex_problem(v, u=1.0, c=None):
    n = v.shape[0] if hasattr(v, "shape") else v.n
    return QpProblem(quadratic=v, linear=np.zeros(n) if c is None else c,
                     eq=((np.ones(n), 1.0),), lower=0.0, upper=u)


def kkt_recomputed(problem: QpProblem, sol: QpSolution) -> float:
    """Independent KKT audit built only from the returned solution."""
    quad, c, eq, ineq, lower, upper, cap = problem.normalized()
    x = sol.x
    grad = 2.0 * quad.matvec(x) + c
    prim = dual = comp = 0.0
    for (a, rhs), lam in zip(eq, sol.dual_eq):
        grad = grad + lam * a
        prim = max(prim, abs(a @ x - rhs))
    for (g, rhs), mu in zip(ineq, sol.dual_ineq):
        grad = grad + mu * g
        slack = g @ x - rhs
        prim = max(prim, max(slack, 0.0))
        dual = max(dual, -mu)
        comp = max(comp, abs(mu * slack))
    if cap is not None:
        slack = x - cap * x.sum()
        grad = grad + sol.dual_cap - cap * sol.dual_cap.sum()
        prim = max(prim, slack.max(initial=0.0))
        dual = max(dual, (-sol.dual_cap).max(initial=0.0))
        comp = max(comp, np.abs(sol.dual_cap * slack).max(initial=0.0))
    grad = grad + sol.dual_box
    prim = max(prim, (lower - x).max(initial=0.0),
               (x - upper).max(initial=0.0))
    fin_up, fin_lo = np.isfinite(upper), np.isfinite(lower)
    up_d = np.maximum(sol.dual_box, 0.0)
    lo_d = np.maximum(-sol.dual_box, 0.0)
    comp = max(comp,
               np.abs(up_d[fin_up] * (upper[fin_up] - x[fin_up])).max(initial=0),
               np.abs(lo_d[fin_lo] * (x[fin_lo] - lower[fin_lo])).max(initial=0))
    return max(np.abs(grad).max(), prim, dual, comp)


class TestSolveQp:
    def test_isotropic_symmetry(self):
        sol = solve_qp(simplex_problem(np.eye(4)))
        assert sol.status == "optimal"
        assert sol.x == pytest.approx(np.full(4, 0.25), abs=1e-10)
        assert sol.kkt_residual <= 1e-8

    def test_inverse_variance_two_assets(self):
        # min x1^2 + 4 x2^2 with x1 + x2 = 1, x >= 0  ->  (0.8, 0.2)
        sol = solve_qp(simplex_problem(np.diag([1.0, 4.0])))
        assert sol.x == pytest.approx([0.8, 0.2], abs=1e-10)
        assert sol.objective == pytest.approx(0.8, rel=1e-9)

    def test_infeasible_cap(self):
        sol = solve_qp(simplex_problem(np.eye(2), u=0.3))
        assert sol.status == "infeasible"

    def test_linear_term_and_inequality(self):
        # min |x - a|^2 s.t. g'x <= 1: projection onto a half-space
        a = np.array([1.0, 2.0])
        g = np.array([1.0, 2.0])
        proj = a - max(0.0, (g @ a - 1.0) / (g @ g)) * g
        problem = QpProblem(quadratic=np.eye(2), linear=-2.0 * a,
                            ineq=((g, 1.0),), lower=-10.0, upper=10.0)
        sol = solve_qp(problem)
        assert sol.status == "optimal"
        assert sol.x == pytest.approx(proj, abs=1e-9)
        assert sol.dual_ineq[0] > 0  # constraint active

    def test_two_equalities(self):
        # min x'x with 1'x = 1 and x1 - x2 = 0 over 3 vars
        problem = QpProblem(quadratic=np.eye(3), linear=np.zeros(3),
                            eq=((np.ones(3), 1.0),
                                (np.array([1.0, -1.0, 0.0]), 0.0)),
                            lower=-5.0, upper=5.0)
        sol = solve_qp(problem)
        assert sol.x == pytest.approx([1 / 3] * 3, abs=1e-9)

    def test_grid_search_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            v = random_pd3(rng)
            u = float(rng.uniform(0.4, 1.0))
            sol = solve_qp(simplex_problem(v, u=u))
            assert sol.status == "optimal"
            assert sol.kkt_residual <= 1e-8
            assert sol.objective <= grid_min_objective(v, u) + 1e-5

    def test_max_iterations_returns_best(self):
        rng = np.random.default_rng(3)
        a = rng.normal(0, 1, (30, 30))
        problem = simplex_problem(a @ a.T + 0.01 * np.eye(30), u=0.2)
        sol = solve_qp(problem, max_iterations=25)
        assert sol.status in ("optimal", "max_iterations")
        assert np.isfinite(sol.kkt_residual)
        assert sol.iterations <= 25

    def test_deterministic_bits(self):
        rng = np.random.default_rng(5)
        v = random_pd3(rng)
        s1 = solve_qp(simplex_problem(v, u=0.6))
        s2 = solve_qp(simplex_problem(v, u=0.6))
        assert np.array_equal(s1.x, s2.x)
        assert s1.objective == s2.objective
        assert s1.kkt_residual == s2.kkt_residual

    def test_duals_reproduce_kkt_residual(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            v = random_pd3(rng)
            problem = simplex_problem(v, u=float(rng.uniform(0.5, 1.0)))
            sol = solve_qp(problem)
            assert sol.status == "optimal"
            assert kkt_recomputed(problem, sol) <= 1e-8

    def test_structured_equals_dense(self):
        rng = np.random.default_rng(33)
        n = 40
        b = rng.uniform(0.5, 1.5, n)
        d = rng.uniform(0.001, 0.02, n)
        quad = StructuredQuad(d, ((0.002, b),))
        s_struct = solve_qp(simplex_problem(quad, u=0.1))
        s_dense = solve_qp(simplex_problem(quad.materialize(), u=0.1))
        assert s_struct.x == pytest.approx(s_dense.x, abs=1e-7)

    def test_matvec_callable_accepted(self):
        v = np.diag([1.0, 4.0])
        sol = solve_qp(simplex_problem(lambda x: v @ x))
        assert sol.x == pytest.approx([0.8, 0.2], abs=1e-9)

    def test_sum_cap_rows(self):
        # z-space program used by max-diversification
        sig = np.array([0.5, 1.0, 2.0])
        problem = QpProblem(quadratic=np.diag(sig ** 2), linear=np.zeros(3),
                            eq=((sig, 1.0),), lower=0.0, upper=np.inf,
                            sum_cap=0.45)
        sol = solve_qp(problem)
        x = sol.x / sol.x.sum()
        assert sol.status == "optimal"
        assert x.max() <= 0.45 + 1e-9
        assert kkt_recomputed(problem, sol) <= 1e-8

    def test_trace_dump(self, tmp_path):
        path = tmp_path / "trace.csv"
        solve_qp(simplex_problem(np.eye(3)), trace_path=path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,primal_residual,dual_residual,objective"
        assert len(lines) >= 2

    def test_bad_bounds_rejected(self):
        with pytest.raises(EngineError):
            solve_qp(QpProblem(quadratic=np.eye(2), linear=np.zeros(2),
                               lower=1.0, upper=0.0))

    @pytest.mark.parametrize("kernels", BACKENDS,
                             ids=lambda k: k.BACKEND)
    def test_backends_agree(self, kernels):
        rng = np.random.default_rng(8)
        n = 60
        b = rng.uniform(0.5, 1.5, n)
        d = rng.uniform(0.001, 0.02, n)
        quad = StructuredQuad(d, ((0.002, b),))
        sol = solve_qp(simplex_problem(quad, u=0.05), kernels=kernels)
        assert sol.status == "optimal"
        assert sol.kkt_residual <= 1e-8


def random_pd3(rng):
    a = rng.normal(0, 1, (3, 3))
    return a @ a.T + 0.05 * np.eye(3)


def grid_min_objective(v, u, step=1e-3):
    grid = np.arange(0.0, u + step / 2, step)
    w1, w2 = np.meshgrid(grid, grid, indexing="ij")
    w3 = 1.0 - w1 - w2
    mask = (w3 >= -1e-12) & (w3 <= u + 1e-12)
    pts = np.stack([w1[mask], w2[mask], np.clip(w3[mask], 0.0, u)], axis=1)
    vals = np.einsum("ki,ij,kj->k", pts, v, pts)
    return float(vals.min())


class TestSolveQuadLog:
    def test_diagonal_closed_form(self):
        sig = np.array([0.5, 1.0, 2.0])
        y = solve_quad_log(np.diag(sig ** 2), 100.0)
        assert y == pytest.approx(1.0 / sig, rel=1e-9)

    def test_identity_gives_ones(self):
        y = solve_quad_log(np.eye(5), 5.0)
        assert y == pytest.approx(np.ones(5), rel=1e-9)

    def test_bound_active(self):
        y = solve_quad_log(np.eye(3), 0.5)
        assert y == pytest.approx(np.full(3, 0.5), abs=1e-12)
        # multiplier nonnegative: gradient cannot point below the bound
        g = y - 1.0 / y
        assert np.all(g <= 1e-10)

    def test_stationarity_random_pd(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = int(rng.integers(2, 12))
            a = rng.normal(0, 1, (n, n))
            v = a @ a.T / n + 0.1 * np.eye(n)
            y = solve_quad_log(v, 50.0, tolerance=1e-9)
            assert np.abs(y * (v @ y) - 1.0).max() <= 1e-6

    def test_structured_quad(self):
        rng = np.random.default_rng(13)
        n = 50
        b = rng.uniform(0.5, 1.5, n)
        d = rng.uniform(0.01, 0.05, n)
        quad = StructuredQuad(d, ((0.002, b),))
        y = solve_quad_log(quad, 50.0, tolerance=1e-10)
        v = quad.materialize()
        assert np.abs(y * (v @ y) - 1.0).max() <= 1e-8

    def test_non_positive_definite_detected(self):
        v = np.diag([1.0, 1.0, -2.0])  # decisively indefinite
        with pytest.raises(NotPositiveDefiniteError):
            solve_quad_log(v, 5.0, model_kind="shrunk_sample")

    def test_error_names_model(self):
        v = np.diag([1.0, -3.0])
        with pytest.raises(NotPositiveDefiniteError,
                           match="shrunk_sample"):
            solve_quad_log(v, 5.0, model_kind="shrunk_sample")

    def test_upper_bound_validated(self):
        with pytest.raises(EngineError):
            solve_quad_log(np.eye(2), 0.0)

    def test_callable_needs_dimension(self):
        v = np.eye(3)
        y = solve_quad_log(lambda x: v @ x, 5.0, n=3)
        assert y == pytest.approx(np.ones(3), rel=1e-9)
        with pytest.raises(EngineError):
            solve_quad_log(lambda x: v @ x, 5.0)
