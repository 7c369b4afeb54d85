"""
The shadow point and its optimal low-rank updates.

The modified Jacobian is always an exact Jacobian B = F'(z_bar). A rank-r update
copies r (lambda_in, s) pairs of the current iterate into the shadow point; copying
the pairs with the largest sqrt((lambda_i - lambda_bar_i)^2 + (s_i - s_bar_i)^2)
minimizes ||F'(z) - B|| in both the 2-norm and the Frobenius norm.
"""
from dataclasses import dataclass

import numpy as np

from .kkt import DimensionError, Direction, Iterate, jacobian_product, residual
from .problem import QpProblem


@dataclass(frozen=True, eq=False)
class ShadowPoint:
    """
    The (lambda_in, s) part of z_bar; its x part is always the current x.
    """
    lambda_bar: np.ndarray
    s_bar: np.ndarray

    def __post_init__(self):
        lambda_bar = np.array(self.lambda_bar, dtype=float).reshape(-1)
        s_bar = np.array(self.s_bar, dtype=float).reshape(-1)
        if lambda_bar.size != s_bar.size:
            raise DimensionError(f"lambda_bar has {lambda_bar.size} entries but s_bar has {s_bar.size}.")
        if not (np.all(lambda_bar > 0) and np.all(s_bar > 0)):
            raise ValueError("Shadow values must be strictly positive.")
        object.__setattr__(self, "lambda_bar", lambda_bar)
        object.__setattr__(self, "s_bar", s_bar)

    @classmethod
    def from_iterate(cls, z: Iterate) -> "ShadowPoint":
        return cls(z.lambda_in.copy(), z.s.copy())

    @property
    def size(self) -> int:
        return self.lambda_bar.size

    def delta(self, z: Iterate) -> tuple[np.ndarray, np.ndarray]:
        """
        (lambda - lambda_bar, s - s_bar)
        """
        if z.lambda_in.size != self.size:
            raise DimensionError(f"Iterate has {z.lambda_in.size} inequality pairs, shadow has {self.size}.")
        return z.lambda_in - self.lambda_bar, z.s - self.s_bar


@dataclass(frozen=True)
class UpdatePlan:
    """
    Indices to patch, in selection order (largest magnitude first, heuristic
    substitutions in place of the evicted ones), and the magnitudes of all pairs.
    """
    indices: tuple[int, ...]
    magnitudes: np.ndarray

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f"Update plan has duplicate indices: {self.indices}.")

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, index: int) -> bool:
        return index in self.indices


def _magnitudes(z: Iterate, zbar: ShadowPoint) -> np.ndarray:
    delta_lambda, delta_s = zbar.delta(z)
    return np.hypot(delta_lambda, delta_s)


def select_indices(z: Iterate, zbar: ShadowPoint, r: int) -> UpdatePlan:
    """
    The r pairs furthest from the shadow point; ties go to the lowest index.
    """
    if r < 0 or r > zbar.size:
        raise ValueError(f"Rank r = {r} outside [0, {zbar.size}].")
    magnitudes = _magnitudes(z, zbar)
    order = np.argsort(-magnitudes, kind="stable")
    return UpdatePlan(tuple(int(i) for i in order[:r]), magnitudes)


def apply_update(zbar: ShadowPoint, z: Iterate, plan: UpdatePlan) -> ShadowPoint:
    if not plan.indices:
        return zbar
    indices = np.array(plan.indices, dtype=int)
    lambda_bar = zbar.lambda_bar.copy()
    s_bar = zbar.s_bar.copy()
    lambda_bar[indices] = z.lambda_in[indices]
    s_bar[indices] = z.s[indices]
    return ShadowPoint(lambda_bar, s_bar)


def frobenius_error(z: Iterate, zbar: ShadowPoint) -> float:
    """
    ||F'(z) - F'(z_bar)||_F, which equals ||z - z_bar||_2 over the (lambda_in, s) pairs.
    """
    return float(np.linalg.norm(_magnitudes(z, zbar)))


def optimal_rank_r_error(z: Iterate, zbar_old: ShadowPoint, r: int, zbar_new: ShadowPoint | None = None) -> float:
    """
    The Frobenius error left by the optimal rank-r update of `zbar_old`.

    Given `zbar_new`, returns ||F'(z) - F'(zbar_new)||_F instead, after checking that
    `zbar_new` changes at most r pairs of `zbar_old` and attains the optimum. Raises
    ValueError otherwise.
    """
    plan = select_indices(z, zbar_old, r)
    mask = np.ones(zbar_old.size, dtype=bool)
    mask[list(plan.indices)] = False
    optimum = float(np.linalg.norm(plan.magnitudes[mask]))
    if zbar_new is None:
        return optimum
    if zbar_new.size != zbar_old.size:
        raise DimensionError(f"zbar_new has {zbar_new.size} pairs, zbar_old has {zbar_old.size}.")
    changed = np.count_nonzero((zbar_new.lambda_bar != zbar_old.lambda_bar) | (zbar_new.s_bar != zbar_old.s_bar))
    if changed > r:
        raise ValueError(f"zbar_new changes {changed} pairs, more than r = {r}.")
    achieved = frobenius_error(z, zbar_new)
    if not np.isclose(achieved, optimum, rtol=1e-12, atol=1e-14):
        raise ValueError(f"zbar_new leaves an error of {achieved:.6e}, the rank-{r} optimum is {optimum:.6e}.")
    return achieved


def spectral_bound(magnitudes: np.ndarray, r: int, m_est: float = 1.0) -> float:
    """
    m_est times the (r+1)-th largest magnitude; zero once r covers every pair.

    `magnitudes` must be sorted in descending order.
    """
    if m_est <= 0:
        raise ValueError(f"m_est must be positive, got {m_est}.")
    magnitudes = np.asarray(magnitudes, dtype=float)
    if r >= magnitudes.size:
        return 0.0
    return float(m_est * magnitudes[r])


@dataclass(frozen=True)
class DescentCheck:
    """
    `criterion_holds` is ||F||^2 > F^T E dz with E = F'(z) - F'(z_bar), which is
    the descent condition rewritten through F'(z_bar) dz = -F.
    """
    is_descent: bool
    directional_derivative: float
    criterion_holds: bool
    converged: bool = False


def descent_check(
    problem: QpProblem, z: Iterate, mu: float, direction: Direction, zbar: ShadowPoint
) -> DescentCheck:
    F = residual(problem, z, mu)
    norm = float(np.linalg.norm(F))
    if norm == 0.0:
        return DescentCheck(False, 0.0, False, converged=True)
    exact = jacobian_product(problem, z.lambda_in, z.s, direction)
    derivative = float(F @ exact) / norm
    shadow = jacobian_product(problem, zbar.lambda_bar, zbar.s_bar, direction)
    criterion = norm ** 2 > float(F @ (exact - shadow))
    return DescentCheck(derivative < 0.0, derivative, criterion)


def inexact_residual(
    problem: QpProblem, z: Iterate, mu: float, direction: Direction
) -> tuple[np.ndarray, float]:
    """
    q = F'(z) dz + F_mu(z) and eta = ||q|| / ||F_mu(z)||; eta is 0 when F_mu(z) = 0.
    """
    F = residual(problem, z, mu)
    q = jacobian_product(problem, z.lambda_in, z.s, direction) + F
    norm = float(np.linalg.norm(F))
    if norm == 0.0:
        return q, 0.0
    return q, float(np.linalg.norm(q)) / norm


def relative_direction_error(newton: Direction, modified: Direction) -> float:
    """
    ||dz_newton - dz_modified|| / ||dz_modified||
    """
    d = modified.as_vector()
    scale = float(np.linalg.norm(d))
    if scale == 0.0:
        return 0.0 if not np.any(newton.as_vector()) else np.inf
    return float(np.linalg.norm(newton.as_vector() - d)) / scale


def relative_error_bound(inverse_norm: float, error_norm: float) -> float:
    """
    Bound ||F'(z)^-1|| * ||E|| on `relative_direction_error`.
    """
    return float(inverse_norm * error_norm)


def local_convergence_condition(error_norm: float, shadow_inverse_norm: float) -> bool:
    """
    ||F'(z) - B||_F < 1 / ||B^-1||, under which unit modified steps converge locally.
    """
    return error_norm * shadow_inverse_norm < 1.0
