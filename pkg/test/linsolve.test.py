import unittest

import numpy as np
import scipy.sparse as sp

from setup_tests import setup_tests

setup_tests()

from lowrankipm.linsolve import (
    DenseLuSolver,
    FactorizationCounter,
    SingularMatrixError,
    SparseLuSolver,
    SquareSystem,
    default_solver,
    factorize,
    solve,
)


class FactorizeTest(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(7)
        self.matrix = rng.standard_normal((6, 6)) + 6.0 * np.eye(6)
        self.rhs = rng.standard_normal(6)

    def test_dense_and_sparse_agree(self):
        expected = np.linalg.solve(self.matrix, self.rhs)
        for solver in (DenseLuSolver(), SparseLuSolver()):
            with self.subTest(solver=type(solver).__name__):
                factorization = factorize(sp.csc_matrix(self.matrix), solver=solver)
                np.testing.assert_allclose(expected, solve(factorization, self.rhs), rtol=1e-12)

    def test_counting(self):
        counter = FactorizationCounter()
        factorization = factorize(self.matrix, counter)
        factorize(self.matrix)
        for _ in range(3):
            solve(factorization, self.rhs)
        self.assertEqual(1, counter.count)

    def test_singular_dense(self):
        matrix = np.array([[1.0, 2.0], [2.0, 4.0]])
        with self.assertRaises(SingularMatrixError):
            factorize(matrix, solver=DenseLuSolver())

    def test_singular_sparse(self):
        matrix = sp.csc_matrix(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))
        with self.assertRaises(SingularMatrixError):
            factorize(matrix, solver=SparseLuSolver())

    def test_zero_matrix(self):
        with self.assertRaises(SingularMatrixError):
            factorize(np.zeros((3, 3)))

    def test_singular_does_not_count(self):
        counter = FactorizationCounter()
        with self.assertRaises(SingularMatrixError):
            factorize(np.zeros((2, 2)), counter)
        self.assertEqual(0, counter.count)

    def test_rhs_shape(self):
        factorization = factorize(self.matrix)
        with self.assertRaises(ValueError):
            solve(factorization, np.ones(5))

    def test_square_system(self):
        with self.assertRaises(ValueError):
            SquareSystem(np.ones((2, 3)))
        self.assertEqual(4, SquareSystem(sp.identity(4)).dimension)

    def test_default_solver(self):
        self.assertIsInstance(default_solver(600), DenseLuSolver)
        self.assertIsInstance(default_solver(601), SparseLuSolver)


if __name__ == "__main__":
    unittest.main()
