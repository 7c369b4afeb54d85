"""
The basic primal-dual interior-point method

    while ||F_0(z)|| > eps_tol:
        while ||F_mu(z)|| > mu:
            solve B dz = -F_mu(z), step with fraction-to-boundary step sizes
        mu <- sigma * mu

with B the exact Jacobian (Newton) or the Jacobian at a shadow point that is
refactorized on a fixed schedule and patched by rank-r updates in between.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg

from .heuristics import (
    RefactorSchedule,
    blocking_ratios,
    h1_substitute,
    h2_substitute,
    l_for_problem,
    refactor_due,
)
from .kkt import Direction, Iterate, assemble_system, merit, solve_direction
from .linsolve import Factorization, FactorizationCounter, SingularMatrixError, factorize
from .problem import QpProblem, classify
from .types import (
    HEURISTIC_MODES,
    KKT_FORMULATIONS,
    METHODS,
    HeuristicMode,
    KktFormulation,
    Method,
    RefactorSetting,
    RunStatus,
    TraceRecord,
)
from .update import (
    ShadowPoint,
    apply_update,
    descent_check,
    frobenius_error,
    inexact_residual,
    select_indices,
    spectral_bound,
)
from .utils import DEFAULT_LOGLEVEL, configure_logger

LSQR_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    mu0: float = 1.0
    sigma: float = 0.1
    eps_tol: float = 1e-6
    method: Method = "newton"
    rank: int = 2
    heuristic: HeuristicMode = "none"
    formulation: KktFormulation = "unreduced"
    refactor_interval: RefactorSetting = "auto"
    max_total_iterations: int = 5000
    step_fraction: float = 0.98
    bootstrap_budget: int = 100

    def __post_init__(self):
        if self.mu0 <= 0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}.")
        if not 0 < self.sigma < 1:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}.")
        if self.eps_tol <= 0:
            raise ValueError(f"eps_tol must be positive, got {self.eps_tol}.")
        if self.method not in METHODS:
            raise ValueError(f"Unknown method '{self.method}'.")
        if self.heuristic not in HEURISTIC_MODES:
            raise ValueError(f"Unknown heuristic '{self.heuristic}'.")
        if self.formulation not in KKT_FORMULATIONS:
            raise ValueError(f"Unknown formulation '{self.formulation}'.")
        if self.rank < 0:
            raise ValueError(f"rank must be >= 0, got {self.rank}.")
        if isinstance(self.refactor_interval, str):
            if self.refactor_interval not in ("auto", "never"):
                raise ValueError(f"Unknown refactor interval '{self.refactor_interval}'.")
        elif self.refactor_interval < 1:
            raise ValueError(f"refactor_interval must be >= 1, got {self.refactor_interval}.")
        if not 0 < self.step_fraction < 1:
            raise ValueError(f"step_fraction must lie in (0, 1), got {self.step_fraction}.")
        if self.max_total_iterations < 0 or self.bootstrap_budget < 0:
            raise ValueError("Iteration budgets must be non-negative.")

    @property
    def method_label(self) -> str:
        """
        e.g. `Newton`, `mN-r(2)` or `mN-r(2)-H1`.
        """
        if self.method == "newton":
            return "Newton"
        label = f"mN-r({self.rank})"
        if self.heuristic != "none":
            label += f"-{self.heuristic.upper()}"
        return label


@dataclass(frozen=True)
class StepSizes:
    alpha_p: float
    alpha_d: float

    @property
    def mean(self) -> float:
        return 0.5 * (self.alpha_p + self.alpha_d)


def max_feasible_steps(z: Iterate, d: Direction) -> StepSizes:
    """
    The largest steps keeping s (primal) and lambda_in (dual) nonnegative; inf when unbounded.
    """
    primal = blocking_ratios(z.s, d.ds)
    dual = blocking_ratios(z.lambda_in, d.dlambda_in)
    return StepSizes(
        float(primal.min()) if primal.size else np.inf,
        float(dual.min()) if dual.size else np.inf,
    )


def step_sizes(z: Iterate, d: Direction, fraction: float = 0.98) -> StepSizes:
    limits = max_feasible_steps(z, d)
    return StepSizes(min(1.0, fraction * limits.alpha_p), min(1.0, fraction * limits.alpha_d))


def take_step(z: Iterate, d: Direction, steps: StepSizes) -> Iterate:
    """
    x and s move with alpha_p, both multiplier blocks with alpha_d.
    """
    return Iterate(
        z.x + steps.alpha_p * d.dx,
        z.lambda_eq + steps.alpha_d * d.dlambda_eq,
        z.lambda_in + steps.alpha_d * d.dlambda_in,
        z.s + steps.alpha_p * d.ds,
    )


class BootstrapError(Exception):
    """
    No initial point was found; `status` is the run status to report.
    """

    def __init__(self, message: str, status: RunStatus, iterations: int = 0):
        super().__init__(message)
        self.status = status
        self.iterations = iterations


def _lstsq(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    if matrix.shape[1] == 0:
        return np.zeros(0)
    return scipy.sparse.linalg.lsqr(matrix, rhs, atol=LSQR_TOLERANCE, btol=LSQR_TOLERANCE)[0]


def _clamped_start(problem: QpProblem) -> Iterate:
    x = _lstsq(
        sp.vstack([problem.H, problem.A_eq, problem.A_in], format="csr"),
        np.concatenate([-problem.c, problem.b_eq, problem.b_in]),
    )
    s = np.maximum(problem.A_in @ x - problem.b_in, 1.0)
    multipliers = _lstsq(
        sp.hstack([problem.A_eq.T, problem.A_in.T], format="csr"),
        problem.H @ x + problem.c,
    )
    lambda_eq = multipliers[:problem.m_eq]
    lambda_in = np.maximum(multipliers[problem.m_eq:], 1.0)
    return Iterate(x, lambda_eq, lambda_in, s)


def _bootstrap(
    problem: QpProblem, config: SolverConfig, counter: FactorizationCounter, logger: logging.Logger
) -> tuple[Iterate, int]:
    """
    Damped Newton on F_mu_b with mu_b decreasing to mu0 / sigma, until ||F_{mu0/sigma}(z)|| < mu0 / sigma.
    """
    target = config.mu0 / config.sigma
    z = _clamped_start(problem)
    mu_b = max(target, float(np.mean(z.lambda_in * z.s))) if problem.m_in else target
    iterations = 0
    while merit(problem, z, target) >= target:
        if mu_b > target and merit(problem, z, mu_b) <= mu_b:
            mu_b = max(target, config.sigma * mu_b)
            continue
        if iterations >= config.bootstrap_budget:
            raise BootstrapError(
                f"No initial point for '{problem.name}' within {config.bootstrap_budget} iterations.",
                "max_iterations", iterations,
            )
        try:
            system = assemble_system(problem, config.formulation, z.lambda_in, z.s)
            factorization = factorize(system, counter, iterations)
        except SingularMatrixError as e:
            raise BootstrapError(f"Singular Jacobian while bootstrapping '{problem.name}': {e}", "singular", iterations) from e
        d = solve_direction(factorization, problem, z, mu_b)
        z = take_step(z, d, step_sizes(z, d, config.step_fraction))
        iterations += 1
    logger.debug(f"Bootstrap for '{problem.name}' finished after {iterations} iteration(s).")
    return z, iterations


def find_initial_point(problem: QpProblem, config: SolverConfig, counter: FactorizationCounter | None = None) -> Iterate:
    """
    A point with lambda_in > 0, s > 0 and ||F_{mu0/sigma}(z)|| < mu0 / sigma.

    Raises BootstrapError when the damped Newton budget runs out or a Jacobian is singular.
    """
    z, _ = _bootstrap(problem, config, counter or FactorizationCounter(), configure_logger(__name__))
    return z


@dataclass(frozen=True)
class EngineStep:
    direction: Direction
    shadow: ShadowPoint
    refactorized: bool
    forced_refactor: bool = False
    spectral_bound: float = 0.0


class DirectionEngine(ABC):
    """
    Parent class for direction engines.

    Child classes implement `direction`, solving B dz = -F_mu(z) at main iteration `k`
    and counting factorizations of freshly assembled Jacobians on `counter`.
    """

    def __init__(self, problem: QpProblem, config: SolverConfig, counter: FactorizationCounter, logger: logging.Logger):
        self.problem = problem
        self.config = config
        self.counter = counter
        self.logger = logger

    def _factorize_at(self, shadow: ShadowPoint, k: int, counted: bool) -> Factorization:
        system = assemble_system(self.problem, self.config.formulation, shadow.lambda_bar, shadow.s_bar)
        return factorize(system, self.counter if counted else None, k)

    @abstractmethod
    def direction(
        self, k: int, z: Iterate, mu: float, prev_z: Iterate | None, prev_direction: Direction | None
    ) -> EngineStep:
        raise NotImplementedError()


class NewtonEngine(DirectionEngine):
    def direction(self, k, z, mu, prev_z, prev_direction):
        shadow = ShadowPoint.from_iterate(z)
        factorization = self._factorize_at(shadow, k, counted=True)
        return EngineStep(solve_direction(factorization, self.problem, z, mu), shadow, refactorized=True)


class ModifiedNewtonEngine(DirectionEngine):
    """
    Jacobians at a shadow point: refactorized at the schedule's hits, patched by the
    optimal rank-r update (plus heuristic substitutions) in between.
    """

    def __init__(self, problem, config, counter, logger, schedule: RefactorSchedule):
        super().__init__(problem, config, counter, logger)
        self.schedule = schedule
        self.shadow: ShadowPoint | None = None
        self.factorization: Factorization | None = None

    def _refactorize(self, z: Iterate, k: int):
        self.shadow = ShadowPoint.from_iterate(z)
        self.factorization = self._factorize_at(self.shadow, k, counted=True)
        self.logger.debug(f"Refactorized at k = {k}.")

    def _patch(self, k: int, z: Iterate, prev_z: Iterate | None, prev_direction: Direction | None) -> float:
        """
        Patches the shadow point and returns the spectral bound of the optimal rank-r update.
        """
        plan = select_indices(z, self.shadow, self.config.rank)
        bound = spectral_bound(np.sort(plan.magnitudes)[::-1], self.config.rank)
        if prev_z is not None and prev_direction is not None:
            if self.config.heuristic == "h1":
                plan = h1_substitute(plan, prev_direction, prev_z)
            elif self.config.heuristic == "h2":
                plan = h2_substitute(plan, z, self.shadow, prev_direction, prev_z, self.config.rank)
        if not plan.indices:
            return bound
        self.shadow = apply_update(self.shadow, z, plan)
        # The patched Jacobian is the logical update of the existing factors; not counted.
        self.factorization = self._factorize_at(self.shadow, k, counted=False)
        return bound

    def direction(self, k, z, mu, prev_z, prev_direction):
        forced = False
        bound = 0.0
        if self.shadow is None or refactor_due(k, self.schedule):
            self._refactorize(z, k)
            refactorized = True
        else:
            refactorized = False
            try:
                bound = self._patch(k, z, prev_z, prev_direction)
            except SingularMatrixError as e:
                self.logger.warning(f"Patched Jacobian singular at k = {k} ({e}); forcing a refactorization.")
                self._refactorize(z, k)
                refactorized = forced = True
                bound = 0.0
        d = solve_direction(self.factorization, self.problem, z, mu)
        return EngineStep(d, self.shadow, refactorized, forced, bound)


@dataclass
class RunReport:
    problem: str
    method_label: str
    status: RunStatus
    iterations: int
    factorizations: int
    bootstrap_iterations: int = 0
    bootstrap_factorizations: int = 0
    trace: list[TraceRecord] = field(default_factory=list)
    z: Iterate | None = None
    mu: float = np.nan
    objective: float = np.nan

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def main_factorizations(self) -> int:
        """
        Factorizations after the bootstrap, the F column of the result tables.
        """
        return self.factorizations - self.bootstrap_factorizations

    @property
    def mean_step_size(self) -> float:
        """
        (alpha_p + alpha_d) / 2 averaged over the main iterations.
        """
        if not self.trace:
            return np.nan
        return float(np.mean([0.5 * (row["alpha_p"] + row["alpha_d"]) for row in self.trace]))


class InteriorPointSolver:
    """
    Runs the interior-point method with one `SolverConfig`.
    ```
    report = InteriorPointSolver(SolverConfig(method="mn", rank=2, heuristic="h1")).solve(problem)
    ```
    """

    def __init__(self, config: SolverConfig = SolverConfig(), log_level=DEFAULT_LOGLEVEL):
        self.config = config
        self.logger = configure_logger(self.__class__.__name__, log_level)

    def schedule_for(self, problem: QpProblem) -> RefactorSchedule:
        setting = self.config.refactor_interval
        if setting == "never":
            return RefactorSchedule(None)
        if setting == "auto":
            if self.config.rank < 1:
                raise ValueError("refactor_interval='auto' needs rank >= 1.")
            return RefactorSchedule(l_for_problem(classify(problem), self.config.rank, problem.m_in))
        return RefactorSchedule(setting)

    def _engine(self, problem: QpProblem, counter: FactorizationCounter) -> DirectionEngine:
        if self.config.method == "newton":
            return NewtonEngine(problem, self.config, counter, self.logger)
        if self.config.rank > problem.m_in:
            raise ValueError(f"rank {self.config.rank} exceeds m_in = {problem.m_in} for '{problem.name}'.")
        schedule = self.schedule_for(problem)
        self.logger.info(f"'{problem.name}': {self.config.method_label} with refactorization parameter l = {schedule.l}.")
        return ModifiedNewtonEngine(problem, self.config, counter, self.logger, schedule)

    def solve(self, problem: QpProblem) -> RunReport:
        config = self.config
        counter = FactorizationCounter()
        engine = self._engine(problem, counter)
        report = RunReport(problem.name, config.method_label, "converged", 0, 0)
        try:
            z, report.bootstrap_iterations = _bootstrap(problem, config, counter, self.logger)
        except BootstrapError as e:
            self.logger.warning(str(e))
            report.status = e.status
            report.bootstrap_iterations = e.iterations
            report.factorizations = report.bootstrap_factorizations = counter.count
            return report
        report.bootstrap_factorizations = counter.count

        mu = config.mu0
        k = 0
        prev_z: Iterate | None = None
        prev_direction: Direction | None = None
        while report.status == "converged" and merit(problem, z, 0.0) > config.eps_tol:
            while (merit_mu := merit(problem, z, mu)) > mu:
                if k >= config.max_total_iterations:
                    self.logger.warning(f"'{problem.name}' hit the iteration cap of {config.max_total_iterations}.")
                    report.status = "max_iterations"
                    break
                try:
                    step = engine.direction(k, z, mu, prev_z, prev_direction)
                except SingularMatrixError as e:
                    self.logger.warning(f"'{problem.name}' stopped on a singular Jacobian at k = {k}: {e}")
                    report.status = "singular"
                    break
                d = step.direction
                check = descent_check(problem, z, mu, d, step.shadow)
                _, eta = inexact_residual(problem, z, mu, d)
                if not check.is_descent and not check.converged:
                    self.logger.warning(
                        f"'{problem.name}' k = {k}: direction is not a descent direction "
                        f"(derivative {check.directional_derivative:.3e})."
                    )
                steps = step_sizes(z, d, config.step_fraction)
                record: TraceRecord = {
                    "k": k,
                    "mu": mu,
                    "merit_mu": merit_mu,
                    "merit_0": merit(problem, z, 0.0),
                    "alpha_p": steps.alpha_p,
                    "alpha_d": steps.alpha_d,
                    "error_norm": frobenius_error(z, step.shadow),
                    "spectral_bound": step.spectral_bound,
                    "eta": eta,
                    "refactorized": step.refactorized,
                    "forced_refactor": step.forced_refactor,
                    "directional_derivative": check.directional_derivative,
                    "descent": check.is_descent,
                }
                report.trace.append(record)
                self.logger.debug(
                    f"k = {k}, mu = {mu:.1e}, ||F_mu|| = {merit_mu:.3e}, "
                    f"alpha = ({steps.alpha_p:.3f}, {steps.alpha_d:.3f})"
                )
                prev_z, prev_direction = z, d
                z = take_step(z, d, steps)
                k += 1
            else:
                mu *= config.sigma

        report.iterations = k
        report.factorizations = counter.count
        report.z = z
        report.mu = mu
        report.objective = problem.objective(z.x)
        self.logger.info(
            f"'{problem.name}' {config.method_label}: {report.status} after {k} iteration(s), "
            f"{report.main_factorizations} factorization(s) (+{report.bootstrap_factorizations} bootstrap)."
        )
        return report


def solve(problem: QpProblem, config: SolverConfig = SolverConfig()) -> RunReport:
    return InteriorPointSolver(config).solve(problem)
