"""
Index substitutions for the update set and the refactorization schedule.

Both heuristics replace members of the update set instead of adding to it, so the
rank of the update never changes. Members are evicted from the tail of the plan,
i.e. smallest selection magnitude first, and an index inserted by a substitution
is never evicted by a later one.
"""
import math
from dataclasses import dataclass
from typing import Final, Sequence

import numpy as np

from .kkt import Direction, Iterate
from .problem import ProblemClass
from .update import ShadowPoint, UpdatePlan

CLASS_DIVISORS: Final[dict[str, int]] = {"S": 2, "M": 10, "L": 100}


def blocking_ratios(values: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """
    values_i / -steps_i where steps_i < 0, inf elsewhere.
    """
    ratios = np.full(values.size, np.inf)
    negative = steps < 0
    ratios[negative] = values[negative] / -steps[negative]
    return ratios


def _substitute(plan: UpdatePlan, candidates: Sequence[int]) -> UpdatePlan:
    if not plan.indices:
        return plan
    indices = list(plan.indices)
    protected = {c for c in candidates if c in indices}
    for candidate in candidates:
        if candidate in indices:
            continue
        victims = [pos for pos in reversed(range(len(indices))) if indices[pos] not in protected]
        if not victims:
            break
        indices[victims[0]] = candidate
        protected.add(candidate)
    return UpdatePlan(tuple(indices), plan.magnitudes)


def h1_substitute(plan: UpdatePlan, prev_direction: Direction, prev_z: Iterate) -> UpdatePlan:
    """
    Brings in the index that limited the previous dual step and then the one that
    limited the previous primal step, each only if its ratio was strictly below 1.
    """
    candidates: list[int] = []
    for values, steps in (
        (prev_z.lambda_in, prev_direction.dlambda_in),
        (prev_z.s, prev_direction.ds),
    ):
        ratios = blocking_ratios(values, steps)
        if ratios.size and ratios.min() < 1.0:
            candidates.append(int(np.argmin(ratios)))
    return _substitute(plan, candidates)


def step_limiting_set(prev_direction: Direction, prev_z: Iterate) -> np.ndarray:
    """
    Indices whose lambda or s ratio was below 1 at the previous iteration, ascending.
    """
    limiting = (blocking_ratios(prev_z.lambda_in, prev_direction.dlambda_in) < 1.0) | (
        blocking_ratios(prev_z.s, prev_direction.ds) < 1.0
    )
    return np.flatnonzero(limiting)


def h2_substitute(
    plan: UpdatePlan, z: Iterate, zbar: ShadowPoint, prev_direction: Direction, prev_z: Iterate, r: int
) -> UpdatePlan:
    """
    Brings in up to r step-limiting indices with the largest relative error
    |lambda/s - lambda_bar/s_bar| / (lambda/s), measured against the pre-update shadow.
    """
    limiting = step_limiting_set(prev_direction, prev_z)
    if limiting.size == 0 or r <= 0:
        return plan
    ratio = z.lambda_in[limiting] / z.s[limiting]
    shadow_ratio = zbar.lambda_bar[limiting] / zbar.s_bar[limiting]
    scores = np.abs(ratio - shadow_ratio) / ratio
    order = np.argsort(-scores, kind="stable")[:min(r, limiting.size)]
    return _substitute(plan, [int(limiting[i]) for i in order])


@dataclass(frozen=True)
class RefactorSchedule:
    """
    Refactorize at k = 0, l+1, 2l+2, ...; `l=None` refactorizes only at k = 0.
    """
    l: int | None

    def __post_init__(self):
        if self.l is not None and self.l < 1:
            raise ValueError(f"Refactorization parameter must be >= 1, got {self.l}.")


def refactor_due(k: int, schedule: RefactorSchedule) -> bool:
    if k < 0:
        raise ValueError(f"Iteration index must be >= 0, got {k}.")
    if schedule.l is None:
        return k == 0
    return k % (schedule.l + 1) == 0


def l_for_problem(problem_class: ProblemClass, r: int, m_in: int) -> int:
    """
    r * m_in / {2, 10, 100} for classes S, M and L, rounded half up and floored at 1.
    """
    if r < 1:
        raise ValueError(f"Rank must be >= 1 to choose a refactorization parameter, got {r}.")
    value = r * m_in / CLASS_DIVISORS[problem_class.label]
    return max(1, math.floor(value + 0.5))
