"""
The preprocessed quadratic program

    minimize    1/2 x^T H x + c^T x
    subject to  A_eq x = b_eq,  A_in x >= b_in

and its size classification.
"""
from dataclasses import dataclass
from typing import TYPE_CHECKING, Final

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg

from .types import ProblemClassLabel
from .utils import configure_logger

if TYPE_CHECKING:
    from .qps_io import RawQp

logger = configure_logger(__name__)

INFINITE_BOUND: Final[float] = 1e20     # magnitudes at or above this are treated as infinite
SYMMETRY_TOLERANCE: Final[float] = 1e-12
FIXING_TOLERANCE: Final[float] = 1e-9
SMALL_CLASS_LIMIT: Final[int] = 500
MEDIUM_CLASS_LIMIT: Final[int] = 10000


class InvalidProblemError(ValueError):
    pass


class AcceptanceFilterError(Exception):
    pass


class InconsistentProblemError(Exception):
    """
    The raw data contradicts itself. `index` is the offending row (or column, for bounds).
    """

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


def _as_csr(matrix, shape: tuple[int, int]) -> sp.csr_matrix:
    if matrix is None:
        return sp.csr_matrix(shape)
    return sp.csr_matrix(matrix, dtype=float)


def _as_vector(vector, length: int) -> np.ndarray:
    if vector is None:
        return np.zeros(length)
    return np.asarray(vector, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class QpProblem:
    """
    An immutable QP in the form consumed by the solver; safe to share between runs.
    """
    name: str
    H: sp.csr_matrix
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        c = _as_vector(self.c, len(self.c))
        n = c.size
        b_eq = _as_vector(self.b_eq, 0 if self.b_eq is None else len(self.b_eq))
        b_in = _as_vector(self.b_in, 0 if self.b_in is None else len(self.b_in))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b_eq", b_eq)
        object.__setattr__(self, "b_in", b_in)
        object.__setattr__(self, "H", _as_csr(self.H, (n, n)))
        object.__setattr__(self, "A_eq", _as_csr(self.A_eq, (b_eq.size, n)))
        object.__setattr__(self, "A_in", _as_csr(self.A_in, (b_in.size, n)))
        self._validate()

    def _validate(self):
        n = self.n
        if n < 1:
            raise InvalidProblemError(f"Problem '{self.name}' has no variables.")
        if self.H.shape != (n, n):
            raise InvalidProblemError(f"H has shape {self.H.shape}, expected {(n, n)}.")
        if self.A_eq.shape != (self.b_eq.size, n):
            raise InvalidProblemError(f"A_eq has shape {self.A_eq.shape}, expected {(self.b_eq.size, n)}.")
        if self.A_in.shape != (self.b_in.size, n):
            raise InvalidProblemError(f"A_in has shape {self.A_in.shape}, expected {(self.b_in.size, n)}.")
        asymmetry = scipy.sparse.linalg.norm(self.H - self.H.T) if self.H.nnz else 0.0
        scale = scipy.sparse.linalg.norm(self.H) if self.H.nnz else 0.0
        if asymmetry > SYMMETRY_TOLERANCE * scale:
            raise InvalidProblemError(f"H is not symmetric: ||H - H^T||_F = {asymmetry:.3e}.")

    @classmethod
    def from_dense(cls, name: str, H, c, A_eq=None, b_eq=None, A_in=None, b_in=None, offset: float = 0.0):
        """
        Builds a problem from array-likes, treating missing blocks as empty.
        """
        c = np.asarray(c, dtype=float).reshape(-1)
        n = c.size
        H = np.zeros((n, n)) if H is None else np.atleast_2d(np.asarray(H, dtype=float))
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
        b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float).reshape(-1)
        A_eq = np.zeros((b_eq.size, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(b_eq.size, n)
        A_in = np.zeros((b_in.size, n)) if A_in is None else np.asarray(A_in, dtype=float).reshape(b_in.size, n)
        return cls(name, sp.csr_matrix(H), c, sp.csr_matrix(A_eq), b_eq, sp.csr_matrix(A_in), b_in, offset)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m_eq(self) -> int:
        return self.b_eq.size

    @property
    def m_in(self) -> int:
        return self.b_in.size

    @property
    def total_pd_vars(self) -> int:
        return self.n + self.m_eq + 2 * self.m_in

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.H @ x) + self.c @ x + self.offset)


@dataclass(frozen=True)
class ProblemClass:
    total_pd_vars: int
    label: ProblemClassLabel


def classify_dimensions(n: int, m_eq: int, m_in: int) -> ProblemClass:
    total = n + m_eq + 2 * m_in
    if total < SMALL_CLASS_LIMIT:
        return ProblemClass(total, "S")
    if total < MEDIUM_CLASS_LIMIT:
        return ProblemClass(total, "M")
    return ProblemClass(total, "L")


def classify(problem: QpProblem) -> ProblemClass:
    return classify_dimensions(problem.n, problem.m_eq, problem.m_in)


def _finite(values: np.ndarray) -> np.ndarray:
    values = values.astype(float, copy=True)
    values[values >= INFINITE_BOUND] = np.inf
    values[values <= -INFINITE_BOUND] = -np.inf
    return values


def _row_bounds(raw: "RawQp") -> tuple[np.ndarray, np.ndarray]:
    """
    Lower and upper activity bounds per constraint row, ranges applied.
    """
    m = raw.num_rows
    rhs = _finite(raw.rhs)
    row_lower = np.full(m, -np.inf)
    row_upper = np.full(m, np.inf)
    for i, sense in enumerate(raw.row_senses):
        if sense in ("G", "E"):
            row_lower[i] = rhs[i]
        if sense in ("L", "E"):
            row_upper[i] = rhs[i]
        if i not in raw.ranges:
            continue
        width = raw.ranges[i]
        if sense == "G":
            row_upper[i] = rhs[i] + abs(width)
        elif sense == "L":
            row_lower[i] = rhs[i] - abs(width)
        elif width > 0:
            row_upper[i] = rhs[i] + width
        elif width < 0:
            row_lower[i] = rhs[i] + width
    return row_lower, row_upper


def _find_fixings(
    raw: "RawQp", A: sp.csr_matrix, lower: np.ndarray, upper: np.ndarray,
    row_lower: np.ndarray, row_upper: np.ndarray,
) -> tuple[dict[int, float], set[int]]:
    """
    Variables fixed by FX bounds or by singleton equality rows, and the rows to drop.
    """
    fixed: dict[int, float] = {int(j): float(lower[j]) for j in np.flatnonzero(lower == upper)}
    removed_rows: set[int] = set()
    for i in range(A.shape[0]):
        if row_lower[i] != row_upper[i] or not np.isfinite(row_lower[i]):
            continue
        start, end = A.indptr[i], A.indptr[i + 1]
        nonzero = A.data[start:end] != 0.0
        if np.count_nonzero(nonzero) != 1:
            continue
        j = int(A.indices[start:end][nonzero][0])
        value = row_lower[i] / A.data[start:end][nonzero][0]
        tolerance = FIXING_TOLERANCE * (1.0 + abs(value))
        if value < lower[j] - tolerance or value > upper[j] + tolerance:
            raise InconsistentProblemError(
                f"Row '{raw.row_names[i]}' fixes column '{raw.col_names[j]}' at {value} outside its bounds.", i
            )
        if j in fixed and abs(fixed[j] - value) > tolerance:
            raise InconsistentProblemError(
                f"Row '{raw.row_names[i]}' fixes column '{raw.col_names[j]}' at {value}, already fixed at {fixed[j]}.", i
            )
        fixed[j] = value
        removed_rows.add(i)
    return fixed, removed_rows


def preprocess(raw: "RawQp", min_inequalities: int = 4) -> QpProblem:
    """
    Puts raw QPS data on the solver's form.

    Variable bounds become rows of A_in, ranged and two-sided rows are split into two
    inequality rows, and trivially fixed variables are eliminated together with their
    fixing rows, their contribution folded into c, the right-hand sides and `offset`.
    """
    A = raw.constraint_matrix().tocsr()
    H = raw.hessian().tocsr()
    c = raw.c.astype(float, copy=True)
    lower = _finite(raw.lower)
    upper = _finite(raw.upper)
    for j in np.flatnonzero(lower > upper):
        raise InconsistentProblemError(f"Column '{raw.col_names[j]}' has lower bound above upper bound.", int(j))
    row_lower, row_upper = _row_bounds(raw)
    for i in np.flatnonzero(row_lower > row_upper):
        raise InconsistentProblemError(f"Row '{raw.row_names[i]}' has empty range.", int(i))

    fixed, removed_rows = _find_fixings(raw, A, lower, upper, row_lower, row_upper)
    values = np.zeros(raw.num_cols)
    for j, value in fixed.items():
        values[j] = value
    keep = np.array([j not in fixed for j in range(raw.num_cols)], dtype=bool)
    offset = raw.objective_constant + float(c @ values) + 0.5 * float(values @ (H @ values))
    shift = A @ values
    row_lower = row_lower - shift
    row_upper = row_upper - shift
    c = (c + H @ values)[keep]
    H = H[keep][:, keep]
    A = A[:, keep].tocsr()
    lower, upper = lower[keep], upper[keep]
    if fixed:
        logger.info(f"Eliminated {len(fixed)} fixed variable(s) and {len(removed_rows)} fixing row(s) from '{raw.name}'.")

    active_rows: list[int] = []
    row_counts = np.diff(A.indptr)
    for i in range(A.shape[0]):
        if i in removed_rows:
            continue
        if row_counts[i] == 0 or not np.any(A.data[A.indptr[i]:A.indptr[i + 1]]):
            if row_lower[i] > FIXING_TOLERANCE or row_upper[i] < -FIXING_TOLERANCE:
                raise InconsistentProblemError(f"Row '{raw.row_names[i]}' is empty but excludes zero.", i)
            logger.info(f"Dropping empty row '{raw.row_names[i]}'.")
            continue
        active_rows.append(i)
    active = np.array(active_rows, dtype=int)
    row_lower, row_upper = row_lower[active], row_upper[active]
    A = A[active]

    is_eq = row_lower == row_upper
    has_lower = ~is_eq & np.isfinite(row_lower)
    has_upper = ~is_eq & np.isfinite(row_upper)
    n = int(np.count_nonzero(keep))
    identity = sp.identity(n, format="csr")
    bounded_below = np.isfinite(lower)
    bounded_above = np.isfinite(upper)
    A_in = sp.vstack(
        [A[has_lower], -A[has_upper], identity[bounded_below], -identity[bounded_above]],
        format="csr",
    )
    b_in = np.concatenate(
        [row_lower[has_lower], -row_upper[has_upper], lower[bounded_below], -upper[bounded_above]]
    )
    if b_in.size < min_inequalities:
        raise AcceptanceFilterError(
            f"Problem '{raw.name}' has m_in = {b_in.size} inequality rows, fewer than {min_inequalities}."
        )
    return QpProblem(
        name=raw.name,
        H=H,
        c=c,
        A_eq=A[is_eq],
        b_eq=row_lower[is_eq],
        A_in=A_in,
        b_in=b_in,
        offset=offset,
    )
