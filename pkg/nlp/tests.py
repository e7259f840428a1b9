import numpy as np
from django.test import SimpleTestCase

from nlp.finite_diff import central_gradient, central_jacobian
from nlp.sqp import NlpProblem, SolveStatus, solve


def rosenbrock(v):
    a, b = v[0], v[1]
    return (1.0 - a) ** 2 + 100.0 * (b - a ** 2) ** 2


def rosenbrock_problem(x0=(-1.0, 1.0)):
    return NlpProblem(
        n=2, objective=rosenbrock,
        ineq=lambda v: np.array([v[0] + v[1] - 1.0]),
        lb=[-2.0, -2.0], ub=[2.0, 2.0], x0=x0,
    )


def rosenbrock_oracle():
    """Плотная сетка на [-2, 2]², затем Ньютон вдоль активной границы a + b = 1."""
    grid = np.linspace(-2.0, 2.0, 801)
    a, b = np.meshgrid(grid, grid, indexing="ij")
    values = np.where(a + b <= 1.0, rosenbrock((a, b)), np.inf)
    i, j = np.unravel_index(np.argmin(values), values.shape)
    x = a[i, j]
    for _ in range(50):
        q = 1.0 - x - x ** 2
        d1 = -2.0 * (1.0 - x) + 200.0 * q * (-1.0 - 2.0 * x)
        d2 = 2.0 + 200.0 * ((1.0 + 2.0 * x) ** 2 - 2.0 * q)
        x -= d1 / d2
    return np.array([x, 1.0 - x])


class FiniteDifferenceTests(SimpleTestCase):
    def test_gradient_of_quadratic(self):
        grad = central_gradient(lambda v: float(v @ v), np.array([1.0, -2.0, 3.0]))
        np.testing.assert_allclose(grad, [2.0, -4.0, 6.0], atol=1e-8)

    def test_batched_and_pointwise_jacobians_agree(self):
        def fun(v):
            return np.stack([np.sin(v[0]) * v[1], v[0] ** 2 + np.exp(v[1])])

        v = np.array([0.3, -0.7])
        np.testing.assert_allclose(
            central_jacobian(fun, v), central_jacobian(fun, v, batched=False), rtol=1e-9,
        )


class SqpExampleTests(SimpleTestCase):
    def test_interior_minimum(self):
        sol = solve(NlpProblem(n=1, objective=lambda v: (v[0] - 3.0) ** 2, lb=[0.0], ub=[10.0], x0=[0.0]))
        self.assertIs(sol.status, SolveStatus.CONVERGED)
        self.assertAlmostEqual(sol.x[0], 3.0, delta=1e-6)
        self.assertLessEqual(sol.kkt_residual, 1e-6)

    def test_active_bound(self):
        sol = solve(NlpProblem(n=1, objective=lambda v: (v[0] - 3.0) ** 2, lb=[0.0], ub=[2.0], x0=[0.0]))
        self.assertIs(sol.status, SolveStatus.CONVERGED)
        self.assertEqual(sol.x[0], 2.0)
        self.assertLessEqual(sol.kkt_residual, 1e-6)

    def test_constrained_rosenbrock_matches_oracle(self):
        sol = solve(rosenbrock_problem(), max_iter=200)
        self.assertIs(sol.status, SolveStatus.CONVERGED)
        self.assertLessEqual(sol.kkt_residual, 1e-6)
        np.testing.assert_allclose(sol.x, rosenbrock_oracle(), atol=1e-5)
        self.assertGreater(sol.ineq_multipliers[0], 0.0)

    def test_equality_constraint(self):
        problem = NlpProblem(
            n=2, objective=lambda v: v[0] ** 2 + v[1] ** 2,
            eq=lambda v: np.array([v[0] + v[1] - 1.0]), x0=[0.5, 0.5],
        )
        sol = solve(problem)
        self.assertIs(sol.status, SolveStatus.CONVERGED)
        np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-6)

    def test_fixed_variable_kept(self):
        problem = NlpProblem(
            n=2, objective=lambda v: (v[0] - 2.0) ** 2 + (v[1] - 3.0) ** 2,
            eq=lambda v: np.array([v[0] + v[1] - 1.0]), x0=[0.0, 0.5],
            lb=[-10.0, 0.5], ub=[10.0, 0.5],
        )
        sol = solve(problem)
        self.assertIs(sol.status, SolveStatus.CONVERGED)
        np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-6)

    def test_point_stays_in_box(self):
        sol = solve(rosenbrock_problem(x0=(5.0, -5.0)), max_iter=200)
        self.assertTrue(np.all(sol.x >= -2.0 - 1e-12))
        self.assertTrue(np.all(sol.x <= 2.0 + 1e-12))


class SqpPropertyTests(SimpleTestCase):
    def test_warm_start_terminates_quickly(self):
        first = solve(rosenbrock_problem(), max_iter=200)
        again = solve(rosenbrock_problem(x0=first.x), max_iter=200)
        self.assertIs(again.status, SolveStatus.CONVERGED)
        self.assertLessEqual(again.iterations, 2)

    def test_deterministic(self):
        first = solve(rosenbrock_problem(), max_iter=200)
        second = solve(rosenbrock_problem(), max_iter=200)
        self.assertTrue(np.array_equal(first.x, second.x))
        self.assertEqual(first.iterations, second.iterations)

    def test_iteration_limit(self):
        sol = solve(rosenbrock_problem(), max_iter=1)
        self.assertIs(sol.status, SolveStatus.ITER_LIMIT)
        self.assertEqual(sol.iterations, 1)

    def test_stalled_line_search_is_not_an_iteration_limit(self):
        # градиент с неверным знаком: направление QP не спускает штрафную функцию
        problem = NlpProblem(
            n=1, objective=lambda v: (v[0] - 1.0) ** 2,
            gradient=lambda v: np.array([-2.0 * (v[0] - 1.0)]), x0=[0.0],
        )
        sol = solve(problem, max_iter=50)
        self.assertIs(sol.status, SolveStatus.STALLED)
        self.assertEqual(sol.iterations, 1)
        self.assertEqual(sol.violation, 0.0)

    def test_infeasible_constraints(self):
        problem = NlpProblem(
            n=1, objective=lambda v: v[0] ** 2,
            eq=lambda v: np.array([v[0] ** 2 + 1.0]), lb=[-3.0], ub=[3.0], x0=[1.0],
        )
        sol = solve(problem, max_iter=60)
        self.assertIs(sol.status, SolveStatus.INFEASIBLE)
        self.assertGreater(sol.violation, 0.5)

    def test_batched_problem(self):
        problem = NlpProblem(
            n=2, objective=lambda v: (v[0] - 1.0) ** 2 + (v[1] + 2.0) ** 2,
            ineq=lambda v: np.atleast_2d(v[0] - 0.5) if np.ndim(v) > 1 else np.array([v[0] - 0.5]),
            x0=[0.0, 0.0], batched=True,
        )
        sol = solve(problem)
        self.assertIs(sol.status, SolveStatus.CONVERGED)
        np.testing.assert_allclose(sol.x, [0.5, -2.0], atol=1e-6)

    def test_trace_is_logged(self):
        with self.assertLogs("nlp.sqp", "DEBUG"):
            solve(rosenbrock_problem(), max_iter=5)
