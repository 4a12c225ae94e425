"""
Augmented Lagrangian solver for smooth constrained NLPs.

    minimize f(z)  subject to  c_E(z) = 0,  c_I(z) >= 0,  lower <= z <= upper

Inequalities enter through the Powell-Hestenes-Rockafellar penalty without
slack variables. Each outer iteration minimizes the augmented Lagrangian
over the box with scipy's L-BFGS-B, then either updates the multipliers or
increases the penalty following the usual eta/omega tolerance schedule.
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.optimize import Bounds, minimize

from cineplan.config import SOLVER_DEFAULTS

logger = logging.getLogger(__name__)

ITERATION_LOG_COLUMNS = ["iteration", "cost", "violation", "penalty", "inner_iterations"]


class NlpModel(ABC):
    """
    Smooth NLP consumed by :func:`solve`.

    Subclasses set ``n``, ``n_eq``, ``n_ineq``, ``lower`` and ``upper`` and
    implement the objective and the stacked constraints [c_E; c_I].
    """

    n: int
    n_eq: int
    n_ineq: int
    lower: np.ndarray
    upper: np.ndarray

    @abstractmethod
    def objective(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        """Return f(z) and its gradient."""

    @abstractmethod
    def constraints(self, z: np.ndarray) -> Tuple[np.ndarray, Any]:
        """Return [c_E(z); c_I(z)] and the (dense or sparse) jacobian."""

    def hover_guess(self) -> Optional[np.ndarray]:
        """Fallback starting point for the recovery retry; ``None`` disables it."""
        return None


class FunctionNlp(NlpModel):
    """
    NLP assembled from plain callables.

    Args:
        objective: z -> (f, grad)
        n: Number of variables
        eq: Optional z -> (c_E, J_E)
        ineq: Optional z -> (c_I, J_I), feasible where c_I >= 0
        lower, upper: Box bounds, infinite when omitted
    """

    def __init__(
        self,
        objective: Callable[[np.ndarray], Tuple[float, np.ndarray]],
        n: int,
        eq: Optional[Callable] = None,
        ineq: Optional[Callable] = None,
        lower: Optional[np.ndarray] = None,
        upper: Optional[np.ndarray] = None,
        fallback: Optional[np.ndarray] = None,
    ):
        self._objective = objective
        self._eq = eq
        self._ineq = ineq
        self._fallback = fallback
        self.n = int(n)
        self.lower = np.full(self.n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(self.n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        probe = np.clip(np.zeros(self.n), self.lower, self.upper)
        self.n_eq = len(eq(probe)[0]) if eq is not None else 0
        self.n_ineq = len(ineq(probe)[0]) if ineq is not None else 0

    def objective(self, z):
        f, g = self._objective(z)
        return float(f), np.asarray(g, dtype=float)

    def constraints(self, z):
        values, jacs = [], []
        for func in (self._eq, self._ineq):
            if func is None:
                continue
            c, jac = func(z)
            values.append(np.atleast_1d(np.asarray(c, dtype=float)))
            jacs.append(sparse.csr_matrix(np.atleast_2d(jac)) if not sparse.issparse(jac) else jac)
        if not values:
            return np.zeros(0), sparse.csr_matrix((0, self.n))
        return np.concatenate(values), sparse.vstack(jacs, format="csr")

    def hover_guess(self):
        return None if self._fallback is None else np.asarray(self._fallback, dtype=float)


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_TIME = "max_time"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible_detected"
    NUMERIC_FAILURE = "numeric_failure"


@dataclass
class SolveOptions:
    """
    Solver settings.

    ``max_wall_time`` of ``None`` disables the time cap. ``iteration_log``
    may be a path or a text stream; one CSV row per outer iteration is
    written there when the solve finishes.
    """

    max_wall_time: Optional[float] = None
    max_iterations: int = SOLVER_DEFAULTS.max_iterations
    feasibility_tol: float = SOLVER_DEFAULTS.feasibility_tol
    optimality_tol: float = SOLVER_DEFAULTS.optimality_tol
    initial_guess: Optional[np.ndarray] = None
    initial_multipliers: Optional[np.ndarray] = None
    max_inner_iterations: int = SOLVER_DEFAULTS.max_inner_iterations
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    max_stalled_increases: int = 10
    iteration_log: Optional[Any] = None

    def __post_init__(self):
        if not (self.feasibility_tol > 0 and self.optimality_tol > 0):
            raise ValueError("Tolerances must be positive")
        if self.max_wall_time is not None and not self.max_wall_time > 0:
            raise ValueError(f"max_wall_time must be positive, got {self.max_wall_time}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass
class SolveResult:
    status: SolveStatus
    z: np.ndarray
    kkt_residual: float
    constraint_violation: float
    iterations: int
    wall_time: float
    cost: float = float("nan")
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    retried: bool = False

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


class _WallTimeExceeded(Exception):
    pass


class _NonFiniteEvaluation(Exception):
    pass


def _as_sparse(jac, n: int):
    if sparse.issparse(jac):
        return jac.tocsr()
    jac = np.atleast_2d(np.asarray(jac, dtype=float))
    return sparse.csr_matrix(jac.reshape(-1, n))


def constraint_violation(nlp: NlpModel, z: np.ndarray, c: Optional[np.ndarray] = None) -> float:
    """Max-norm violation of equalities, inequalities and box bounds."""
    if c is None:
        c, _ = nlp.constraints(z)
    eq = np.abs(c[: nlp.n_eq])
    ineq = np.maximum(0.0, -c[nlp.n_eq :])
    box = np.maximum(np.maximum(nlp.lower - z, z - nlp.upper), 0.0)
    return float(max(eq.max(initial=0.0), ineq.max(initial=0.0), box.max(initial=0.0)))


def kkt_residual(nlp: NlpModel, z: np.ndarray, multipliers: Optional[np.ndarray] = None) -> float:
    """
    First-order optimality residual evaluated from scratch.

    Stationarity is the projected gradient of the Lagrangian over the box,
    scaled by max(1, |grad f|_inf). Complementarity is max_i min(mu_i, |c_i|)
    over the inequality rows.

    Args:
        nlp: Problem
        z: Candidate point
        multipliers: [lambda_E; mu_I], zero when omitted
    """
    z = np.asarray(z, dtype=float)
    _, grad = nlp.objective(z)
    c, jac = nlp.constraints(z)
    m = nlp.n_eq + nlp.n_ineq
    y = np.zeros(m) if multipliers is None else np.asarray(multipliers, dtype=float)
    grad_l = grad - (_as_sparse(jac, nlp.n).T @ y if m else 0.0)
    projected = np.clip(z - grad_l, nlp.lower, nlp.upper) - z
    stationarity = float(np.max(np.abs(projected), initial=0.0)) / max(
        1.0, float(np.max(np.abs(grad), initial=0.0))
    )
    mu = y[nlp.n_eq :]
    complementarity = float(np.max(np.minimum(np.abs(mu), np.abs(c[nlp.n_eq :])), initial=0.0))
    dual_sign = float(np.max(np.maximum(-mu, 0.0), initial=0.0))
    return max(stationarity, complementarity, dual_sign)


class _AugmentedLagrangian:
    """PHR merit function with wall-time and finiteness checks on every evaluation."""

    def __init__(self, nlp: NlpModel, deadline: Optional[float]):
        self.nlp = nlp
        self.deadline = deadline
        self.lam = np.zeros(nlp.n_eq)
        self.mu = np.zeros(nlp.n_ineq)
        self.rho = 10.0
        self.evaluations = 0

    def __call__(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise _WallTimeExceeded
        self.evaluations += 1
        f, grad = self.nlp.objective(z)
        c, jac = self.nlp.constraints(z)
        if not (np.isfinite(f) and np.all(np.isfinite(grad)) and np.all(np.isfinite(c))):
            raise _NonFiniteEvaluation
        n_eq = self.nlp.n_eq
        c_eq, c_in = c[:n_eq], c[n_eq:]
        y_eq = self.lam - self.rho * c_eq
        y_in = np.maximum(0.0, self.mu - self.rho * c_in)
        value = (
            f
            - float(self.lam @ c_eq)
            + 0.5 * self.rho * float(c_eq @ c_eq)
            + float(y_in @ y_in - self.mu @ self.mu) / (2.0 * self.rho)
        )
        y = np.concatenate([y_eq, y_in])
        if len(y):
            grad = grad - _as_sparse(jac, self.nlp.n).T @ y
        return value, grad

    def first_order_multipliers(self, c: np.ndarray) -> np.ndarray:
        n_eq = self.nlp.n_eq
        return np.concatenate(
            [self.lam - self.rho * c[:n_eq], np.maximum(0.0, self.mu - self.rho * c[n_eq:])]
        )


@dataclass
class _Iterate:
    z: np.ndarray
    cost: float
    violation: float
    kkt: float
    multipliers: np.ndarray

    def better_than(self, other: Optional["_Iterate"], feasibility_tol: float) -> bool:
        if other is None:
            return True
        mine = self.violation <= feasibility_tol
        theirs = other.violation <= feasibility_tol
        if mine != theirs:
            return mine
        if mine:
            return self.cost < other.cost
        return self.violation < other.violation


def _evaluate(nlp: NlpModel, z: np.ndarray, multipliers: np.ndarray) -> _Iterate:
    f, _ = nlp.objective(z)
    c, _ = nlp.constraints(z)
    return _Iterate(
        z=z.copy(),
        cost=float(f),
        violation=constraint_violation(nlp, z, c),
        kkt=kkt_residual(nlp, z, multipliers),
        multipliers=multipliers.copy(),
    )


def _write_iteration_log(rows: List[Dict[str, float]], target) -> None:
    frame = pd.DataFrame(rows, columns=ITERATION_LOG_COLUMNS)
    frame.to_csv(target, index=False)


def _solve_once(
    nlp: NlpModel, z0: np.ndarray, options: SolveOptions, deadline: Optional[float], log_rows: List
) -> Tuple[SolveStatus, _Iterate, int]:
    merit = _AugmentedLagrangian(nlp, deadline)
    merit.rho = options.initial_penalty
    m = nlp.n_eq + nlp.n_ineq
    if options.initial_multipliers is not None and len(options.initial_multipliers) == m:
        y0 = np.asarray(options.initial_multipliers, dtype=float)
        merit.lam = y0[: nlp.n_eq].copy()
        merit.mu = np.maximum(y0[nlp.n_eq :], 0.0)
    multipliers = np.concatenate([merit.lam, merit.mu])

    z = np.clip(np.asarray(z0, dtype=float), nlp.lower, nlp.upper)
    try:
        current = _evaluate(nlp, z, multipliers)
    except FloatingPointError:
        return SolveStatus.NUMERIC_FAILURE, _Iterate(z, np.nan, np.inf, np.inf, multipliers), 0
    if not (np.isfinite(current.cost) and np.isfinite(current.violation)):
        return SolveStatus.NUMERIC_FAILURE, current, 0
    best = current
    if current.violation <= options.feasibility_tol and current.kkt <= options.optimality_tol:
        return SolveStatus.CONVERGED, current, 0

    eta0, omega0 = 0.1258925, 1.0
    eta = eta0 * merit.rho**-0.1
    omega = omega0 / merit.rho
    eta_floor = 0.1 * options.feasibility_tol
    omega_floor = 0.1 * options.optimality_tol
    stalled = 0
    best_violation = current.violation
    bounds = Bounds(nlp.lower, nlp.upper)

    for iteration in range(1, options.max_iterations + 1):
        last_accepted = {"z": z.copy()}

        def remember(xk):
            last_accepted["z"] = np.array(xk, copy=True)

        try:
            inner = minimize(
                merit,
                z,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                callback=remember,
                options={
                    "maxiter": options.max_inner_iterations,
                    "gtol": max(omega, omega_floor),
                    "ftol": 1e-15,
                    "maxcor": 20,
                },
            )
            z = np.clip(inner.x, nlp.lower, nlp.upper)
            inner_iterations = int(inner.nit)
        except _WallTimeExceeded:
            z = np.clip(last_accepted["z"], nlp.lower, nlp.upper)
            current = _evaluate(nlp, z, multipliers)
            if current.better_than(best, options.feasibility_tol):
                best = current
            logger.info("Solver hit its wall-time cap after %d outer iterations", iteration - 1)
            return SolveStatus.MAX_TIME, best, iteration
        except _NonFiniteEvaluation:
            logger.warning("Non-finite cost or constraint value at outer iteration %d", iteration)
            return SolveStatus.NUMERIC_FAILURE, best, iteration

        c, _ = nlp.constraints(z)
        candidate = merit.first_order_multipliers(c)
        current = _evaluate(nlp, z, candidate)
        if current.better_than(best, options.feasibility_tol):
            best = current
        log_rows.append(
            {
                "iteration": iteration,
                "cost": current.cost,
                "violation": current.violation,
                "penalty": merit.rho,
                "inner_iterations": inner_iterations,
            }
        )
        logger.debug(
            "iter %3d  cost %.6e  viol %.3e  kkt %.3e  rho %.1e  inner %d",
            iteration,
            current.cost,
            current.violation,
            current.kkt,
            merit.rho,
            inner_iterations,
        )

        if current.violation <= options.feasibility_tol and current.kkt <= options.optimality_tol:
            return SolveStatus.CONVERGED, current, iteration

        if current.violation <= max(eta, eta_floor):
            merit.lam = candidate[: nlp.n_eq]
            merit.mu = candidate[nlp.n_eq :]
            multipliers = candidate
            eta = max(eta / merit.rho**0.9, eta_floor)
            omega = max(omega / merit.rho, omega_floor)
        else:
            if current.violation < 0.5 * best_violation:
                stalled = 0
            else:
                stalled += 1
            best_violation = min(best_violation, current.violation)
            if stalled >= options.max_stalled_increases:
                logger.info(
                    "Penalty increased %d times without progress, declaring infeasible", stalled
                )
                return SolveStatus.INFEASIBLE, best, iteration
            merit.rho *= options.penalty_growth
            eta = max(eta0 * merit.rho**-0.1, eta_floor)
            omega = max(omega0 / merit.rho, omega_floor)

    return SolveStatus.MAX_ITER, best, options.max_iterations


_RETRY_STATUSES = (SolveStatus.MAX_ITER, SolveStatus.INFEASIBLE, SolveStatus.NUMERIC_FAILURE)


def solve(nlp: NlpModel, options: Optional[SolveOptions] = None) -> SolveResult:
    """
    Solve ``nlp`` from ``options.initial_guess``.

    The best iterate is returned even when the solve stops early. A solve
    that fails for any reason other than the time cap is retried once from
    the model's hover guess, when it provides one.

    Returns:
        SolveResult; its ``z`` is always finite and inside the box
    """
    options = options or SolveOptions()
    start = time.perf_counter()
    deadline = None if options.max_wall_time is None else start + options.max_wall_time

    z0 = options.initial_guess
    if z0 is None:
        z0 = nlp.hover_guess()
    if z0 is None:
        z0 = np.zeros(nlp.n)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (nlp.n,):
        raise ValueError(f"Initial guess has shape {z0.shape}, expected ({nlp.n},)")
    if not np.all(np.isfinite(z0)):
        raise ValueError("Initial guess contains non-finite values")

    logger.debug(
        "Solving NLP: %d variables, %d equalities, %d inequalities", nlp.n, nlp.n_eq, nlp.n_ineq
    )
    log_rows: List[Dict[str, float]] = []
    status, best, iterations = _solve_once(nlp, z0, options, deadline, log_rows)
    retried = False

    fallback = nlp.hover_guess()
    if status in _RETRY_STATUSES and fallback is not None:
        logger.info("Solve ended with %s, retrying from the hover guess", status.value)
        retried = True
        retry_options = SolveOptions(**{**options.__dict__, "initial_multipliers": None})
        status_2, best_2, iterations_2 = _solve_once(
            nlp, fallback, retry_options, deadline, log_rows
        )
        iterations += iterations_2
        if status_2 is SolveStatus.CONVERGED or best_2.better_than(best, options.feasibility_tol):
            status, best = status_2, best_2
        elif status_2 is SolveStatus.MAX_TIME:
            status = status_2

    if not np.all(np.isfinite(best.z)):
        best.z = np.clip(z0, nlp.lower, nlp.upper)
    if options.iteration_log is not None:
        _write_iteration_log(log_rows, options.iteration_log)

    wall_time = time.perf_counter() - start
    logger.info(
        "Solve finished: %s after %d iterations, violation %.2e, %.3f s",
        status.value,
        iterations,
        best.violation,
        wall_time,
    )
    return SolveResult(
        status=status,
        z=best.z,
        kkt_residual=best.kkt,
        constraint_violation=best.violation,
        iterations=iterations,
        wall_time=wall_time,
        cost=best.cost,
        multipliers=best.multipliers,
        retried=retried,
    )
