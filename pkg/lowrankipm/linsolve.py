"""
Direct factorizations of the KKT systems and the factorization counter.

Only factorizations are counted; solves against an existing factorization are free.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .types import KktFormulation

DENSE_LIMIT = 600           # systems up to this dimension are factorized densely
PIVOT_TOLERANCE = 1e-13     # relative to the largest initial |entry|


class SingularMatrixError(Exception):
    """
    Raised when a pivot falls below the singularity threshold.

    `index` is the position of the offending pivot when it is known.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass
class FactorizationCounter:
    """
    Counts factorizations of freshly assembled Jacobians.
    """
    count: int = 0

    def increment(self) -> int:
        self.count += 1
        return self.count


@dataclass(frozen=True, eq=False)
class SquareSystem:
    """
    An assembled square system ready for factorization.

    For the reduced and condensed formulations `lambda_bar` and `s_bar` hold the
    shadow values the matrix was built from, needed to recover the eliminated unknowns.
    """
    matrix: np.ndarray | sp.spmatrix
    formulation: KktFormulation = "unreduced"
    lambda_bar: np.ndarray | None = None
    s_bar: np.ndarray | None = None

    def __post_init__(self):
        rows, cols = self.matrix.shape
        if rows != cols:
            raise ValueError(f"System must be square, got shape {self.matrix.shape}.")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


class LinearSolver(ABC):
    """
    Parent class for direct solvers.

    Child classes implement `factor`, returning opaque factors, and `solve`.
    """

    @abstractmethod
    def factor(self, matrix: np.ndarray | sp.spmatrix) -> Any:
        raise NotImplementedError()

    @abstractmethod
    def solve(self, factors: Any, rhs: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    @staticmethod
    def _check_pivots(pivots: np.ndarray, scale: float):
        threshold = PIVOT_TOLERANCE * scale
        small = np.flatnonzero(np.abs(pivots) <= threshold)
        if scale == 0.0 or small.size > 0:
            index = int(small[0]) if small.size > 0 else 0
            raise SingularMatrixError(
                f"Matrix is numerically singular: pivot {index} below {threshold:.3e}.", index
            )


class DenseLuSolver(LinearSolver):
    """
    LU with partial pivoting through `scipy.linalg.lu_factor`.
    """

    def factor(self, matrix: np.ndarray | sp.spmatrix):
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
        scale = float(np.max(np.abs(dense))) if dense.size else 0.0
        lu, piv = scipy.linalg.lu_factor(dense, check_finite=True)
        self._check_pivots(np.diag(lu), scale)
        return lu, piv

    def solve(self, factors, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(factors, rhs)


class SparseLuSolver(LinearSolver):
    """
    Sparse LU through `scipy.sparse.linalg.splu` (SuperLU).
    """

    def factor(self, matrix: np.ndarray | sp.spmatrix):
        csc = sp.csc_matrix(matrix)
        scale = float(abs(csc).max()) if csc.nnz else 0.0
        try:
            lu = scipy.sparse.linalg.splu(csc)
        except RuntimeError as e:
            raise SingularMatrixError(f"Matrix is singular: {e}") from e
        self._check_pivots(lu.U.diagonal(), scale)
        return lu

    def solve(self, factors, rhs: np.ndarray) -> np.ndarray:
        return factors.solve(rhs)


def default_solver(dimension: int) -> LinearSolver:
    if dimension <= DENSE_LIMIT:
        return DenseLuSolver()
    return SparseLuSolver()


@dataclass(frozen=True, eq=False)
class Factorization:
    """
    Factors of a `SquareSystem`; immutable, so solves may share it.
    """
    system: SquareSystem
    factors: Any
    solver: LinearSolver
    creation_iteration: int = 0

    @property
    def formulation(self) -> KktFormulation:
        return self.system.formulation

    @property
    def dimension(self) -> int:
        return self.system.dimension


def factorize(
    system: SquareSystem | np.ndarray | sp.spmatrix,
    counter: FactorizationCounter | None = None,
    iteration: int = 0,
    solver: LinearSolver | None = None,
) -> Factorization:
    """
    Factorizes `system`, incrementing `counter` when one is given.

    Passing no counter factorizes without counting, used for patched shadow
    Jacobians between refactorizations.
    """
    if not isinstance(system, SquareSystem):
        system = SquareSystem(system)
    if solver is None:
        solver = default_solver(system.dimension)
    factors = solver.factor(system.matrix)
    if counter is not None:
        counter.increment()
    return Factorization(system, factors, solver, iteration)


def solve(factorization: Factorization, rhs: np.ndarray) -> np.ndarray:
    """
    Solves against an existing factorization. Never touches a counter.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (factorization.dimension,):
        raise ValueError(
            f"Right-hand side has shape {rhs.shape}, expected ({factorization.dimension},)."
        )
    return factorization.solver.solve(factorization.factors, rhs)
