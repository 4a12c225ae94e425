"""
Self-checks run by ``cineplan check``.

Each check compares an analytic quantity against an independent oracle:
central finite differences for derivatives, closed forms for the
integrator and the attitude recovery, and the KKT audit for a solve.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
import pandas as pd

from cineplan.config import PlannerBounds, PlannerWeights
from cineplan.dynamics import (
    ControlInput,
    UavState,
    acceleration_from_attitude,
    recover_attitude,
    step_rk4,
)
from cineplan.gimbal import gimbal_rates
from cineplan.ocp import DynamicObstacle, NeighborPlan, OcpProblem, TranscribedNlp, build
from cineplan.shots import DesiredState, TargetEstimate, predict_target
from cineplan.solver import SolveOptions, kkt_residual, solve
from cineplan.zones import CircleZone, PolygonZone

logger = logging.getLogger(__name__)


def central_difference(
    func: Callable[[np.ndarray], np.ndarray], x: np.ndarray, eps: float = 1e-6
) -> np.ndarray:
    """
    Centered finite-difference derivative of ``func`` at ``x``.

    Returns a gradient for scalar functions and an (m, n) jacobian for
    vector-valued ones.
    """
    x0 = np.asarray(x, dtype=float)
    columns = []
    for j in range(len(x0)):
        x = x0.copy()
        x[j] = x0[j] + eps
        f_plus = np.asarray(func(x), dtype=float)
        x[j] = x0[j] - eps
        f_minus = np.asarray(func(x), dtype=float)
        columns.append((f_plus - f_minus) / (2 * eps))
    return np.stack(columns, axis=-1)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute difference scaled by the larger of 1 and the largest entry."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    if analytic.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(numeric))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def canned_problem(horizon_steps: int = 10, dt: float = 0.1) -> TranscribedNlp:
    """
    Small planning problem touching every cost term and row family.

    The UAV starts behind a target moving along +x, next to a circular and
    a square no-fly zone, with one neighbor plan and the target as obstacle.
    """
    target = TargetEstimate(p=[0.0, 0.0, 0.0], v=[1.5, 0.0, 0.0])
    prediction = predict_target(target, horizon_steps, dt)
    times = dt * np.arange(horizon_steps + 1)
    neighbor = np.column_stack(
        [-4.0 + 1.0 * times, np.full_like(times, 5.0), np.full_like(times, 4.0)]
    )
    problem = OcpProblem(
        x0=UavState(p=[-8.0, 1.0, 3.0], v=[1.0, 0.2, 0.0]),
        horizon_steps=horizon_steps,
        dt=dt,
        weights=PlannerWeights(w1=1.0, w2=100.0, w3=0.5, w4=1.0),
        bounds=PlannerBounds(),
        desired=DesiredState(p=[-6.0, 0.0, 3.0], v=[1.5, 0.0, 0.0]),
        target_pred=prediction,
        nofly=[
            CircleZone(center=[-3.0, -4.0], radius=1.5),
            PolygonZone(vertices=[[2.0, 3.0], [4.0, 3.0], [4.0, 5.0], [2.0, 5.0]]),
        ],
        neighbor_plans=[NeighborPlan("uav0", neighbor)],
        dynamic_obstacles=[DynamicObstacle(prediction.positions, 1.0, name="target")],
        visibility=True,
    )
    return build(problem)


def random_points(
    nlp: TranscribedNlp, count: int, seed: int = 0, scale: float = 0.3
) -> List[np.ndarray]:
    """Perturbations of the hover guess; the first six entries stay on x'."""
    rng = np.random.default_rng(seed)
    base = nlp.hover_guess()
    points = []
    for _ in range(count):
        z = base + scale * rng.standard_normal(nlp.n)
        z[:6] = base[:6]
        points.append(z)
    return points


def directional_errors(
    nlp: TranscribedNlp, points: int = 100, seed: int = 0, eps: float = 1e-6
) -> Tuple[float, float]:
    """
    Worst relative errors of the cost gradient and the constraint jacobian
    along random unit directions, at ``points`` perturbed hover guesses.
    """
    rng = np.random.default_rng(seed + 1)
    cost_error = jacobian_error = 0.0
    for z in random_points(nlp, points, seed=seed):
        d = rng.standard_normal(nlp.n)
        d /= np.linalg.norm(d)
        _, grad = nlp.objective(z)
        numeric = (nlp.objective(z + eps * d)[0] - nlp.objective(z - eps * d)[0]) / (2 * eps)
        cost_error = max(cost_error, relative_error(grad @ d, numeric))
        _, jac = nlp.constraints(z)
        numeric_rows = (nlp.constraints(z + eps * d)[0] - nlp.constraints(z - eps * d)[0]) / (
            2 * eps
        )
        jacobian_error = max(jacobian_error, relative_error(jac @ d, numeric_rows))
    return cost_error, jacobian_error


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def check_cost_gradient(points: int = 5) -> CheckResult:
    nlp = canned_problem()
    worst = 0.0
    for z in random_points(nlp, points, seed=1):
        _, grad = nlp.objective(z)
        numeric = central_difference(lambda w: nlp.objective(w)[0], z)
        worst = max(worst, relative_error(grad, numeric))
    return CheckResult("cost gradient vs finite differences", worst, 1e-5)


def check_constraint_jacobian(points: int = 5) -> CheckResult:
    nlp = canned_problem()
    worst = 0.0
    for z in random_points(nlp, points, seed=2):
        _, jac = nlp.constraints(z)
        numeric = central_difference(lambda w: nlp.constraints(w)[0], z)
        worst = max(worst, relative_error(jac.toarray(), numeric))
    return CheckResult("constraint jacobian vs finite differences", worst, 1e-5)


def check_rk4_exactness() -> CheckResult:
    x = UavState(p=[1.0, -2.0, 3.0], v=[0.5, 0.25, -1.0])
    u = np.array([0.3, -0.7, 1.1])
    dt = 0.37
    nxt = step_rk4(x, ControlInput(u), dt)
    p = x.p + x.v * dt + 0.5 * u * dt * dt
    v = x.v + u * dt
    err = max(float(np.max(np.abs(nxt.p - p))), float(np.max(np.abs(nxt.v - v))))
    return CheckResult("RK4 step vs closed form", err, 1e-12)


def check_attitude_round_trip() -> CheckResult:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        v = rng.uniform(-3.0, 3.0, 3)
        a = rng.uniform(-3.0, 3.0, 3)
        att = recover_attitude(v, a)
        worst = max(worst, float(np.max(np.abs(acceleration_from_attitude(att) - a))))
    return CheckResult("attitude recovery round trip", worst, 1e-9)


def check_gimbal_rates() -> CheckResult:
    q = np.array([5.0, -3.0, 4.0])
    r = np.array([-1.0, 0.5, 0.2])
    v = np.array([1.2, 0.4, 0.0])
    a = np.array([0.1, 0.3, 0.0])
    analytic = np.array(gimbal_rates(q, r, v, a))
    eps = 1e-6

    def angles(t: float) -> np.ndarray:
        qt = q + r * t
        vt = v + a * t
        h = math.hypot(qt[0], qt[1])
        yaw = math.atan2(vt[1], vt[0])
        return np.array([math.atan2(-h, qt[2]), math.atan2(-qt[1], -qt[0]) - yaw])

    numeric = (angles(eps) - angles(-eps)) / (2 * eps)
    error = relative_error(analytic, numeric)
    return CheckResult("gimbal rates vs finite differences", error, 1e-5)


def check_kkt_audit() -> CheckResult:
    nlp = canned_problem()
    result = solve(nlp, SolveOptions(initial_guess=nlp.initial_guess()))
    if not result.converged:
        logger.warning("Canned solve ended with %s", result.status.value)
        return CheckResult("KKT audit of canned solve", float("inf"), SolveOptions().optimality_tol)
    residual = kkt_residual(nlp, result.z, result.multipliers)
    return CheckResult("KKT audit of canned solve", residual, SolveOptions().optimality_tol)


CHECKS = (
    check_cost_gradient,
    check_constraint_jacobian,
    check_rk4_exactness,
    check_attitude_round_trip,
    check_gimbal_rates,
    check_kkt_audit,
)


def run_checks() -> pd.DataFrame:
    """Run every check; one row per check with its value, tolerance and verdict."""
    rows = []
    for check in CHECKS:
        result = check()
        logger.info("%s: %.3e (tol %.1e)", result.name, result.value, result.tolerance)
        rows.append(
            {
                "check": result.name,
                "value": result.value,
                "tolerance": result.tolerance,
                "passed": result.passed,
            }
        )
    return pd.DataFrame(rows, columns=["check", "value", "tolerance", "passed"])
