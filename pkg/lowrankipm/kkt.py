"""
Residual, Jacobians and search directions of the primal-dual system

    F_mu(z) = ( Hx + c - A_eq^T lambda_eq - A_in^T lambda_in,
                A_eq x - b_eq,
                A_in x - s - b_in,
                Lambda_in S e - mu e ),     z = (x, lambda_eq, lambda_in, s).

The Jacobian is constant apart from the (S, Lambda_in) row block, so every
matrix here is assembled from a pair (lambda_bar, s_bar): the iterate itself for
exact Newton, a shadow point for the modified Newton method.
"""
from dataclasses import dataclass
from typing import Final

import numpy as np
import scipy.sparse as sp

from .linsolve import Factorization, SquareSystem, solve
from .problem import QpProblem
from .types import KktFormulation
from .utils import configure_logger

logger = configure_logger(__name__)

CONDENSED_LIMIT: Final[int] = 2000
SOLVE_RESIDUAL_TOLERANCE: Final[float] = 1e-8


class DimensionError(ValueError):
    pass


def _vector(values) -> np.ndarray:
    return np.array(values, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class Iterate:
    """
    z = (x, lambda_eq, lambda_in, s) with lambda_in > 0 and s > 0.
    """
    x: np.ndarray
    lambda_eq: np.ndarray
    lambda_in: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        for name in ("x", "lambda_eq", "lambda_in", "s"):
            object.__setattr__(self, name, _vector(getattr(self, name)))
        if self.lambda_in.size != self.s.size:
            raise DimensionError(f"lambda_in has {self.lambda_in.size} entries but s has {self.s.size}.")
        if not (np.all(self.lambda_in > 0) and np.all(self.s > 0)):
            raise ValueError("lambda_in and s must be strictly positive.")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.lambda_eq, self.lambda_in, self.s])

    @classmethod
    def from_vector(cls, problem: QpProblem, values: np.ndarray) -> "Iterate":
        x, lambda_eq, lambda_in, s = _split(problem, values)
        return cls(x, lambda_eq, lambda_in, s)

    def check_dimensions(self, problem: QpProblem):
        expected = (problem.n, problem.m_eq, problem.m_in, problem.m_in)
        actual = (self.x.size, self.lambda_eq.size, self.lambda_in.size, self.s.size)
        if expected != actual:
            raise DimensionError(f"Iterate has block sizes {actual}, problem needs {expected}.")


@dataclass(frozen=True, eq=False)
class Direction:
    dx: np.ndarray
    dlambda_eq: np.ndarray
    dlambda_in: np.ndarray
    ds: np.ndarray

    def __post_init__(self):
        for name in ("dx", "dlambda_eq", "dlambda_in", "ds"):
            object.__setattr__(self, name, _vector(getattr(self, name)))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.dx, self.dlambda_eq, self.dlambda_in, self.ds])

    @classmethod
    def from_vector(cls, problem: QpProblem, values: np.ndarray) -> "Direction":
        return cls(*_split(problem, values))

    @classmethod
    def zeros(cls, problem: QpProblem) -> "Direction":
        return cls.from_vector(problem, np.zeros(problem.total_pd_vars))


@dataclass(frozen=True, eq=False)
class DeltaJacobian:
    """
    The change Delta F'(Delta z), nonzero only in the (S, Lambda_in) row block.
    """
    delta_lambda: np.ndarray
    delta_s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta_lambda", _vector(self.delta_lambda))
        object.__setattr__(self, "delta_s", _vector(self.delta_s))
        if self.delta_lambda.size != self.delta_s.size:
            raise DimensionError("delta_lambda and delta_s differ in length.")

    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.delta_lambda, self.delta_s)


def _offsets(problem: QpProblem) -> tuple[int, int, int, int]:
    n, m_eq, m_in = problem.n, problem.m_eq, problem.m_in
    return n, n + m_eq, n + m_eq + m_in, n + m_eq + 2 * m_in


def _split(problem: QpProblem, values: np.ndarray):
    values = _vector(values)
    if values.size != problem.total_pd_vars:
        raise DimensionError(f"Vector has {values.size} entries, expected {problem.total_pd_vars}.")
    a, b, c, _ = _offsets(problem)
    return values[:a], values[a:b], values[b:c], values[c:]


def _check_shadow(problem: QpProblem, lambda_in_bar: np.ndarray, s_bar: np.ndarray):
    if lambda_in_bar.size != problem.m_in or s_bar.size != problem.m_in:
        raise DimensionError(
            f"Shadow pair has sizes ({lambda_in_bar.size}, {s_bar.size}), expected {problem.m_in}."
        )


def residual(problem: QpProblem, z: Iterate, mu: float) -> np.ndarray:
    z.check_dimensions(problem)
    return np.concatenate([
        problem.H @ z.x + problem.c - problem.A_eq.T @ z.lambda_eq - problem.A_in.T @ z.lambda_in,
        problem.A_eq @ z.x - problem.b_eq,
        problem.A_in @ z.x - z.s - problem.b_in,
        z.lambda_in * z.s - mu,
    ])


def merit(problem: QpProblem, z: Iterate, mu: float) -> float:
    """
    phi_mu(z) = ||F_mu(z)||_2
    """
    return float(np.linalg.norm(residual(problem, z, mu)))


def jacobian_product(
    problem: QpProblem, lambda_in: np.ndarray, s: np.ndarray, d: Direction | np.ndarray
) -> np.ndarray:
    """
    F'(z) d without assembling F'(z); only (lambda_in, s) of z enter.
    """
    if not isinstance(d, Direction):
        d = Direction.from_vector(problem, d)
    _check_shadow(problem, lambda_in, s)
    return np.concatenate([
        problem.H @ d.dx - problem.A_eq.T @ d.dlambda_eq - problem.A_in.T @ d.dlambda_in,
        problem.A_eq @ d.dx,
        problem.A_in @ d.dx - d.ds,
        s * d.dlambda_in + lambda_in * d.ds,
    ])


def _place(blocks: list[tuple[int, int, sp.spmatrix]], shape: tuple[int, int]) -> sp.csc_matrix:
    """
    Sums sparse blocks placed at (row, col) offsets into one matrix.
    """
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for row_offset, col_offset, block in blocks:
        coo = sp.coo_matrix(block)
        rows.append(coo.row + row_offset)
        cols.append(coo.col + col_offset)
        data.append(coo.data)
    if not rows:
        return sp.csc_matrix(shape)
    return sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


def assemble_jacobian(problem: QpProblem, lambda_in_bar: np.ndarray, s_bar: np.ndarray) -> SquareSystem:
    """
    The unreduced Jacobian F'(z_bar); only its last row block depends on (lambda_bar, s_bar).
    """
    lambda_in_bar, s_bar = _vector(lambda_in_bar), _vector(s_bar)
    _check_shadow(problem, lambda_in_bar, s_bar)
    a, b, c, size = _offsets(problem)
    m_in = problem.m_in
    matrix = _place([
        (0, 0, problem.H),
        (0, a, -problem.A_eq.T),
        (0, b, -problem.A_in.T),
        (a, 0, problem.A_eq),
        (b, 0, problem.A_in),
        (b, c, -sp.identity(m_in)),
        (c, b, sp.diags(s_bar, shape=(m_in, m_in))),
        (c, c, sp.diags(lambda_in_bar, shape=(m_in, m_in))),
    ], (size, size))
    return SquareSystem(matrix, "unreduced", lambda_in_bar, s_bar)


def assemble_reduced(problem: QpProblem, lambda_in_bar: np.ndarray, s_bar: np.ndarray) -> SquareSystem:
    """
    The symmetric system in (dx, -dlambda_eq, -dlambda_in) with the slack step eliminated.
    """
    lambda_in_bar, s_bar = _vector(lambda_in_bar), _vector(s_bar)
    _check_shadow(problem, lambda_in_bar, s_bar)
    if np.any(lambda_in_bar <= 0):
        raise ValueError("The reduced system needs lambda_bar > 0.")
    n, m_eq, m_in = problem.n, problem.m_eq, problem.m_in
    size = n + m_eq + m_in
    matrix = _place([
        (0, 0, problem.H),
        (0, n, problem.A_eq.T),
        (0, n + m_eq, problem.A_in.T),
        (n, 0, problem.A_eq),
        (n + m_eq, 0, problem.A_in),
        (n + m_eq, n + m_eq, sp.diags(-s_bar / lambda_in_bar, shape=(m_in, m_in))),
    ], (size, size))
    return SquareSystem(matrix, "reduced", lambda_in_bar, s_bar)


def assemble_condensed(problem: QpProblem, lambda_in_bar: np.ndarray, s_bar: np.ndarray) -> SquareSystem:
    """
    The dense system in (dx, -dlambda_eq) after a Schur complement of the slack block.

    With no equality constraints this is the n-by-n matrix H + A_in^T S_bar^-1 Lambda_bar A_in.
    """
    lambda_in_bar, s_bar = _vector(lambda_in_bar), _vector(s_bar)
    _check_shadow(problem, lambda_in_bar, s_bar)
    if problem.n > CONDENSED_LIMIT:
        raise ValueError(f"The condensed system is limited to n <= {CONDENSED_LIMIT}, got n = {problem.n}.")
    if np.any(s_bar <= 0):
        raise ValueError("The condensed system needs s_bar > 0.")
    n, m_eq = problem.n, problem.m_eq
    A_in = problem.A_in.toarray()
    matrix = np.zeros((n + m_eq, n + m_eq))
    matrix[:n, :n] = problem.H.toarray() + A_in.T @ ((lambda_in_bar / s_bar)[:, None] * A_in)
    if m_eq:
        A_eq = problem.A_eq.toarray()
        matrix[:n, n:] = A_eq.T
        matrix[n:, :n] = A_eq
    return SquareSystem(matrix, "condensed", lambda_in_bar, s_bar)


_ASSEMBLERS = {
    "unreduced": assemble_jacobian,
    "reduced": assemble_reduced,
    "condensed": assemble_condensed,
}


def assemble_system(
    problem: QpProblem, formulation: KktFormulation, lambda_in_bar: np.ndarray, s_bar: np.ndarray
) -> SquareSystem:
    return _ASSEMBLERS[formulation](problem, lambda_in_bar, s_bar)


def solve_direction(factorization: Factorization, problem: QpProblem, z: Iterate, mu: float) -> Direction:
    """
    Solves F'(z_bar) dz = -F_mu(z), z_bar being the point the factorized system was built from.

    Eliminated unknowns are recovered with the shadow pair in the matrix terms and the
    current (lambda_in, s) in the right-hand side.
    """
    system = factorization.system
    F = residual(problem, z, mu)
    r1, r2, r3, r4 = _split(problem, F)
    n, m_eq = problem.n, problem.m_eq
    lambda_bar, s_bar = system.lambda_bar, system.s_bar

    if system.formulation == "unreduced":
        direction = Direction.from_vector(problem, solve(factorization, -F))
    elif system.formulation == "reduced":
        solution = solve(factorization, -np.concatenate([r1, r2, r3 + r4 / lambda_bar]))
        dx = solution[:n]
        dlambda_eq = -solution[n:n + m_eq]
        dlambda_in = -solution[n + m_eq:]
        ds = -(r4 + s_bar * dlambda_in) / lambda_bar
        direction = Direction(dx, dlambda_eq, dlambda_in, ds)
    else:
        w = (lambda_bar * r3 + r4) / s_bar
        solution = solve(factorization, np.concatenate([-r1 - problem.A_in.T @ w, -r2]))
        dx = solution[:n]
        dlambda_eq = -solution[n:]
        dlambda_in = -w - (lambda_bar / s_bar) * (problem.A_in @ dx)
        ds = -(r4 + s_bar * dlambda_in) / lambda_bar
        direction = Direction(dx, dlambda_eq, dlambda_in, ds)

    if lambda_bar is not None and s_bar is not None:
        check = np.linalg.norm(jacobian_product(problem, lambda_bar, s_bar, direction) + F)
        bound = SOLVE_RESIDUAL_TOLERANCE * (1.0 + np.linalg.norm(F))
        if check > bound:
            logger.warning(f"Direction residual {check:.3e} exceeds {bound:.3e} ({system.formulation}).")
    return direction


def assemble_delta(problem: QpProblem, d: DeltaJacobian) -> sp.csc_matrix:
    """
    The explicit matrix Delta F'(Delta z).
    """
    if d.delta_lambda.size != problem.m_in:
        raise DimensionError(f"Delta has {d.delta_lambda.size} entries, expected {problem.m_in}.")
    _, b, c, size = _offsets(problem)
    m_in = problem.m_in
    return _place([
        (c, b, sp.diags(d.delta_s, shape=(m_in, m_in))),
        (c, c, sp.diags(d.delta_lambda, shape=(m_in, m_in))),
    ], (size, size))


def delta_svd(d: DeltaJacobian) -> list[tuple[float, int]]:
    """
    Singular values sqrt(dlambda_i^2 + ds_i^2) of Delta F' with their constraint
    indices, largest first; equal values keep ascending index order.
    """
    values = d.magnitudes()
    order = np.argsort(-values, kind="stable")
    return [(float(values[i]), int(i)) for i in order]
