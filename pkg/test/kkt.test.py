import unittest

import numpy as np

from setup_tests import setup_tests

setup_tests()

from instances import random_iterate, random_problem
from lowrankipm.kkt import (
    CONDENSED_LIMIT,
    DeltaJacobian,
    DimensionError,
    Direction,
    Iterate,
    assemble_condensed,
    assemble_delta,
    assemble_jacobian,
    assemble_system,
    delta_svd,
    jacobian_product,
    merit,
    residual,
    solve_direction,
)
from lowrankipm.linsolve import factorize
from lowrankipm.problem import QpProblem
from lowrankipm.types import KKT_FORMULATIONS


def _dense(system):
    matrix = system.matrix
    return matrix.toarray() if hasattr(matrix, "toarray") else np.asarray(matrix)


def _scalar_problem() -> QpProblem:
    # min x^2 - 2x subject to x >= 0
    return QpProblem.from_dense("scalar", [[2.0]], [-2.0], A_in=[[1.0]], b_in=[0.0])


class IterateTest(unittest.TestCase):
    def test_positivity(self):
        with self.assertRaises(ValueError):
            Iterate([0.0], [], [1.0, 0.0], [1.0, 1.0])
        with self.assertRaises(ValueError):
            Iterate([0.0], [], [1.0], [-1.0])

    def test_vector_round_trip(self):
        rng = np.random.default_rng(1)
        problem = random_problem(rng, 3, 1, 4)
        z = random_iterate(rng, problem)
        np.testing.assert_array_equal(z.as_vector(), Iterate.from_vector(problem, z.as_vector()).as_vector())

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(2)
        problem = random_problem(rng, 3, 1, 4)
        z = Iterate(np.zeros(2), np.zeros(1), np.ones(4), np.ones(4))
        with self.assertRaises(DimensionError):
            residual(problem, z, 1.0)
        with self.assertRaises(DimensionError):
            Direction.from_vector(problem, np.zeros(5))


class ResidualTest(unittest.TestCase):
    def test_point_on_barrier_trajectory(self):
        rng = np.random.default_rng(3)
        problem = random_problem(rng, 4, 2, 5)
        mu = 0.3
        x = rng.standard_normal(4)
        lambda_eq = rng.standard_normal(2)
        s = rng.uniform(0.5, 2.0, 5)
        lambda_in = mu / s
        # shift the data so that z solves F_mu(z) = 0
        on_path = QpProblem.from_dense(
            "on_path",
            problem.H.toarray(),
            -problem.H @ x + problem.A_eq.T @ lambda_eq + problem.A_in.T @ lambda_in,
            problem.A_eq.toarray(),
            problem.A_eq @ x,
            problem.A_in.toarray(),
            problem.A_in @ x - s,
        )
        z = Iterate(x, lambda_eq, lambda_in, s)
        np.testing.assert_allclose(np.zeros(problem.total_pd_vars), residual(on_path, z, mu), atol=1e-12)
        self.assertLess(merit(on_path, z, mu), 1e-12)
        self.assertAlmostEqual(mu * np.sqrt(5), merit(on_path, z, 0.0))

    def test_block_layout(self):
        problem = QpProblem.from_dense("p", [[2.0]], [1.0], [[1.0]], [3.0], [[1.0], [-1.0]], [0.0, -5.0])
        z = Iterate([1.0], [0.5], [1.0, 2.0], [3.0, 4.0])
        np.testing.assert_allclose(
            [2.0 + 1.0 - 0.5 - 1.0 + 2.0, 1.0 - 3.0, 1.0 - 3.0, -1.0 - 4.0 + 5.0, 3.0 - 0.1, 8.0 - 0.1],
            residual(problem, z, 0.1),
        )

    def test_scalar_example(self):
        z = Iterate([1.0], [], [1.0], [1.0])
        np.testing.assert_array_equal([-1.0, 0.0, 0.0], residual(_scalar_problem(), z, 1.0))


class JacobianTest(unittest.TestCase):
    def test_scalar_example(self):
        J = _dense(assemble_jacobian(_scalar_problem(), np.array([3.0]), np.array([4.0])))
        np.testing.assert_array_equal([[2.0, -1.0, 0.0], [1.0, 0.0, -1.0], [0.0, 4.0, 3.0]], J)

    def test_product_matches_assembly(self):
        rng = np.random.default_rng(4)
        problem = random_problem(rng, 5, 2, 6)
        z = random_iterate(rng, problem)
        d = rng.standard_normal(problem.total_pd_vars)
        J = _dense(assemble_jacobian(problem, z.lambda_in, z.s))
        np.testing.assert_allclose(J @ d, jacobian_product(problem, z.lambda_in, z.s, d), atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        problem = random_problem(rng, 3, 1, 4)
        z = random_iterate(rng, problem)
        J = _dense(assemble_jacobian(problem, z.lambda_in, z.s))
        h = 1e-7
        base = residual(problem, z, 0.5)
        for column in range(problem.total_pd_vars):
            shifted = z.as_vector()
            shifted[column] += h
            derivative = (residual(problem, Iterate.from_vector(problem, shifted), 0.5) - base) / h
            np.testing.assert_allclose(J[:, column], derivative, atol=1e-5)

    def test_shape_without_equalities(self):
        rng = np.random.default_rng(6)
        problem = random_problem(rng, 3, 0, 2)
        system = assemble_jacobian(problem, np.ones(2), np.ones(2))
        self.assertEqual(7, system.dimension)

    def test_condensed_limit(self):
        problem = QpProblem.from_dense("big", None, np.zeros(CONDENSED_LIMIT + 1))
        with self.assertRaises(ValueError):
            assemble_condensed(problem, np.zeros(0), np.zeros(0))


class FormulationTest(unittest.TestCase):
    def test_scalar_example(self):
        problem = _scalar_problem()
        z = Iterate([1.0], [], [1.0], [1.0])
        expected = np.linalg.solve([[2.0, -1.0, 0.0], [1.0, 0.0, -1.0], [0.0, 1.0, 1.0]], [1.0, 0.0, -0.9])
        for formulation in KKT_FORMULATIONS:
            with self.subTest(formulation=formulation):
                system = assemble_system(problem, formulation, z.lambda_in, z.s)
                d = solve_direction(factorize(system), problem, z, 0.1)
                np.testing.assert_allclose(expected, d.as_vector(), rtol=1e-12, atol=1e-14)

    def test_directions_agree(self):
        rng = np.random.default_rng(8)
        for instance in range(50):
            n = int(rng.integers(1, 7))
            m_eq = int(rng.integers(0, n + 1))
            m_in = int(rng.integers(1, 9))
            problem = random_problem(rng, n, m_eq, m_in)
            z = random_iterate(rng, problem)
            lambda_bar = rng.uniform(0.5, 2.0, m_in)
            s_bar = rng.uniform(0.5, 2.0, m_in)
            mu = float(rng.uniform(0.01, 1.0))
            directions = {
                formulation: solve_direction(
                    factorize(assemble_system(problem, formulation, lambda_bar, s_bar)), problem, z, mu
                ).as_vector()
                for formulation in KKT_FORMULATIONS
            }
            reference = directions["unreduced"]
            scale = np.linalg.norm(reference)
            for formulation in ("reduced", "condensed"):
                with self.subTest(instance=instance, formulation=formulation):
                    self.assertLessEqual(np.linalg.norm(directions[formulation] - reference), 1e-9 * scale)

    def test_unreduced_direction_solves_shadow_system(self):
        rng = np.random.default_rng(9)
        problem = random_problem(rng, 4, 1, 5)
        z = random_iterate(rng, problem)
        lambda_bar, s_bar = rng.uniform(0.5, 2.0, 5), rng.uniform(0.5, 2.0, 5)
        d = solve_direction(factorize(assemble_jacobian(problem, lambda_bar, s_bar)), problem, z, 0.2)
        np.testing.assert_allclose(
            -residual(problem, z, 0.2), jacobian_product(problem, lambda_bar, s_bar, d), atol=1e-10
        )


class DeltaTest(unittest.TestCase):
    def test_single_pair(self):
        self.assertEqual([(5.0, 0)], delta_svd(DeltaJacobian([3.0], [4.0])))

    def test_order_and_ties(self):
        values = delta_svd(DeltaJacobian([1.0, 0.0, 3.0, 1.0], [0.0, 1.0, 4.0, 0.0]))
        self.assertEqual([0, 1, 3], [index for _, index in values[1:]])
        self.assertEqual(2, values[0][1])

    def test_singular_values_match_closed_form(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            problem = random_problem(rng, int(rng.integers(1, 5)), 0, int(rng.integers(1, 8)))
            d = DeltaJacobian(rng.standard_normal(problem.m_in), rng.standard_normal(problem.m_in))
            dense = np.linalg.svd(assemble_delta(problem, d).toarray(), compute_uv=False)[:problem.m_in]
            closed = np.array([value for value, _ in delta_svd(d)])
            np.testing.assert_allclose(dense, closed, rtol=1e-12)

    def test_delta_is_jacobian_difference(self):
        rng = np.random.default_rng(11)
        problem = random_problem(rng, 3, 1, 4)
        z, other = random_iterate(rng, problem), random_iterate(rng, problem)
        difference = _dense(assemble_jacobian(problem, z.lambda_in, z.s)) - _dense(
            assemble_jacobian(problem, other.lambda_in, other.s)
        )
        d = DeltaJacobian(z.lambda_in - other.lambda_in, z.s - other.s)
        np.testing.assert_allclose(difference, assemble_delta(problem, d).toarray(), atol=1e-15)


if __name__ == "__main__":
    unittest.main()
