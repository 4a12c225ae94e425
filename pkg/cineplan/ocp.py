"""
Transcription of the per-UAV planning problem into a smooth NLP.

Direct multiple shooting: the decision vector stacks every state and every
control, z = [x_0, ..., x_N, u_0, ..., u_{N-1}], and the dynamics become
equality rows. All cost terms and constraint rows come with analytic first
derivatives.

Inequality rows (g(z) >= 0) are laid out in a fixed order:

    1. no-fly zones, one block of N+1 rows per zone
    2. collisions, dynamic obstacles first, then neighbor plans
    3. pitch lower bounds, then pitch upper bounds (when enabled)
    4. relative yaw window (when enabled and narrower than a full turn)
    5. mutual visibility, one block per neighbor (when enabled)

Rows at k = 0 only depend on the measured state; they are evaluated there,
clipped at zero and carry no derivatives.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from cineplan.config import GUARDS, PlannerBounds, PlannerWeights
from cineplan.dynamics import UavState, step_rk4_batch
from cineplan.exceptions import NonFiniteInputError, OcpBuildError
from cineplan.gimbal import guarded_pitch, guarded_pitch_rate, guarded_yaw_cosine, guarded_yaw_rate
from cineplan.shots import DesiredState, TargetPrediction
from cineplan.solver import NlpModel
from cineplan.zones import NoFlyZone

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeighborPlan:
    """Positions of a higher-priority UAV at the planner's time steps."""

    uav_id: str
    positions: np.ndarray


@dataclass(frozen=True)
class DynamicObstacle:
    """Predicted positions of a spherical obstacle of the given radius."""

    positions: np.ndarray
    radius: float
    name: str = "obstacle"


@dataclass
class OcpProblem:
    """Frozen snapshot of everything one solve depends on."""

    x0: UavState
    horizon_steps: int
    dt: float
    weights: PlannerWeights
    bounds: PlannerBounds
    desired: DesiredState
    target_pred: TargetPrediction
    nofly: Sequence[NoFlyZone] = field(default_factory=list)
    neighbor_plans: Sequence[NeighborPlan] = field(default_factory=list)
    dynamic_obstacles: Sequence[DynamicObstacle] = field(default_factory=list)
    visibility: bool = True
    # Diagonal weighting of the terminal error [p, v]; identity when None.
    terminal_scale: Optional[np.ndarray] = None


def _extend_positions(positions: np.ndarray, count: int, dt: float, what: str) -> np.ndarray:
    """Pad a position sequence to ``count`` rows by constant-velocity extrapolation."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise OcpBuildError(f"{what} must be an (M, 3) array, got shape {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise NonFiniteInputError(f"{what} contains non-finite values")
    if len(pos) >= count:
        return pos[:count]
    if len(pos) < 2:
        raise OcpBuildError(f"{what} has {len(pos)} samples, cannot extrapolate to {count}")
    vel = (pos[-1] - pos[-2]) / dt
    extra = pos[-1] + np.arange(1, count - len(pos) + 1)[:, None] * dt * vel
    return np.vstack([pos, extra])


class _RowCollector:
    """Accumulates inequality values and sparse jacobian triplets block by block."""

    def __init__(self, horizon_steps: int):
        self.n_steps = horizon_steps + 1
        self.values: List[np.ndarray] = []
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.data: List[np.ndarray] = []
        self.offset = 0

    def add(self, value: np.ndarray, grad_p: np.ndarray, grad_v: Optional[np.ndarray] = None):
        value = value.copy()
        value[0] = max(value[0], 0.0)
        self.values.append(value)
        k = np.arange(1, self.n_steps)
        for grad, base in ((grad_p, 0), (grad_v, 3)):
            if grad is None:
                continue
            for i in range(3):
                self.rows.append(self.offset + k)
                self.cols.append(6 * k + base + i)
                self.data.append(grad[1:, i])
        self.offset += self.n_steps


class TranscribedNlp(NlpModel):
    """
    Multiple-shooting NLP of one planning problem.

    Use :func:`build` to create it. Equality rows are the six initial-state
    rows followed by six rows per dynamics step.
    """

    def __init__(self, problem: OcpProblem):
        n_steps = int(problem.horizon_steps)
        if n_steps < 1:
            raise OcpBuildError(f"horizon_steps must be >= 1, got {n_steps}")
        if not (math.isfinite(problem.dt) and problem.dt > 0):
            raise OcpBuildError(f"dt must be positive, got {problem.dt}")
        if len(problem.target_pred) < n_steps + 1:
            raise OcpBuildError(
                f"Target prediction has {len(problem.target_pred)} samples, needs {n_steps + 1}"
            )
        self.problem = problem
        self.N = n_steps
        self.dt = float(problem.dt)
        self.weights = problem.weights
        self.bounds = problem.bounds
        self.n = 9 * n_steps + 6
        self._n_state = 6 * (n_steps + 1)
        self.x0 = problem.x0.as_vector()
        self.x_desired = problem.desired.as_vector()
        self.terminal_scale = (
            np.ones(6)
            if problem.terminal_scale is None
            else np.asarray(problem.terminal_scale, dtype=float).reshape(6)
        )
        self.target_p = np.asarray(problem.target_pred.positions, dtype=float)[: n_steps + 1]
        self.target_v = np.asarray(problem.target_pred.velocities, dtype=float)[: n_steps + 1]

        count = n_steps + 1
        self.obstacles = [
            (
                _extend_positions(obs.positions, count, self.dt, f"obstacle {obs.name}"),
                float(obs.radius),
            )
            for obs in problem.dynamic_obstacles
        ]
        self.neighbors = [
            (
                plan.uav_id,
                _extend_positions(plan.positions, count, self.dt, f"plan of {plan.uav_id}"),
            )
            for plan in problem.neighbor_plans
        ]
        self.zones = list(problem.nofly)

        self.yaw_window: Optional[Tuple[float, float]] = None
        if self.bounds.psi is not None:
            lo, hi = self.bounds.psi
            half = 0.5 * (hi - lo)
            if half < math.pi:
                self.yaw_window = (0.5 * (lo + hi), half)

        self.lower, self.upper = self._box()
        self._a_eq, self._b_eq = self._equality_matrix()
        self.n_eq = self._a_eq.shape[0]
        self.n_ineq = len(self._inequality_labels())
        logger.debug(
            "Built OCP: N=%d, %d variables, %d equality and %d inequality rows",
            self.N,
            self.n,
            self.n_eq,
            self.n_ineq,
        )

    # Layout -----------------------------------------------------------------

    def states(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[: self._n_state]).reshape(self.N + 1, 6)

    def controls(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[self._n_state :]).reshape(self.N, 3)

    def pack(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        return np.concatenate([np.ravel(states), np.ravel(controls)])

    def _box(self) -> Tuple[np.ndarray, np.ndarray]:
        b = self.bounds
        state_lo = np.concatenate([np.full(3, -np.inf), b.v_min])
        state_hi = np.concatenate([np.full(3, np.inf), b.v_max])
        lower = np.concatenate([np.tile(state_lo, self.N + 1), np.tile(b.u_min, self.N)])
        upper = np.concatenate([np.tile(state_hi, self.N + 1), np.tile(b.u_max, self.N)])
        lower[:6] = self.x0
        upper[:6] = self.x0
        return lower, upper

    def _equality_matrix(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        n_steps, dt = self.N, self.dt
        eye3 = sparse.identity(3, format="csr")
        phi = sparse.bmat([[eye3, dt * eye3], [None, eye3]])
        gamma = sparse.vstack([0.5 * dt * dt * eye3, dt * eye3])
        blocks = [[None] * (2 * n_steps + 1) for _ in range(n_steps + 1)]
        blocks[0][0] = sparse.identity(6)
        for k in range(n_steps):
            blocks[k + 1][k] = -phi
            blocks[k + 1][k + 1] = sparse.identity(6)
            blocks[k + 1][n_steps + 1 + k] = -gamma
        a_eq = sparse.bmat(blocks, format="csr")
        b_eq = np.concatenate([self.x0, np.zeros(6 * n_steps)])
        return a_eq, b_eq

    # Cost -------------------------------------------------------------------

    def cost_terms(self, z: np.ndarray) -> Dict[str, float]:
        """Unweighted cost terms: effort, pitch_rate, yaw_rate, terminal."""
        x = self.states(z)
        u = self.controls(z)
        q = x[:-1, :3] - self.target_p[:-1]
        r = x[:-1, 3:] - self.target_v[:-1]
        pitch, _, _ = guarded_pitch_rate(q, r)
        yaw = guarded_yaw_rate(q, r, x[:-1, 3:], u)[0]
        err = x[-1] - self.x_desired
        return {
            "effort": float(np.sum(u * u)),
            "pitch_rate": float(np.sum(pitch**2)),
            "yaw_rate": float(np.sum(yaw**2)),
            "terminal": float(np.sum(self.terminal_scale * err * err)),
        }

    def objective(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        w = self.weights
        x = self.states(z)
        u = self.controls(z)
        gx = np.zeros_like(x)
        gu = 2.0 * w.w1 * u
        f = w.w1 * float(np.sum(u * u))

        q = x[:-1, :3] - self.target_p[:-1]
        r = x[:-1, 3:] - self.target_v[:-1]
        if w.w2 > 0:
            rate, dq, dr = guarded_pitch_rate(q, r)
            f += w.w2 * float(np.sum(rate**2))
            coef = 2.0 * w.w2 * rate[:, None]
            gx[:-1, :3] += coef * dq
            gx[:-1, 3:] += coef * dr
        if w.w3 > 0:
            rate, dq, dr, dv, da = guarded_yaw_rate(q, r, x[:-1, 3:], u)
            f += w.w3 * float(np.sum(rate**2))
            coef = 2.0 * w.w3 * rate[:, None]
            gx[:-1, :3] += coef * dq
            gx[:-1, 3:] += coef * (dr + dv)
            gu += coef * da

        err = x[-1] - self.x_desired
        f += w.w4 * float(np.sum(self.terminal_scale * err * err))
        gx[-1] += 2.0 * w.w4 * self.terminal_scale * err
        return f, self.pack(gx, gu)

    # Constraints ------------------------------------------------------------

    def _inequality_labels(self) -> List[str]:
        steps = range(self.N + 1)
        labels: List[str] = []
        for i, _ in enumerate(self.zones):
            labels += [f"nofly[{i}].k{k}" for k in steps]
        for i, _ in enumerate(self.obstacles):
            labels += [f"collision.obstacle[{i}].k{k}" for k in steps]
        for uav_id, _ in self.neighbors:
            labels += [f"collision.{uav_id}.k{k}" for k in steps]
        if self.bounds.theta is not None:
            labels += [f"theta.min.k{k}" for k in steps]
            labels += [f"theta.max.k{k}" for k in steps]
        if self.yaw_window is not None:
            labels += [f"psi.k{k}" for k in steps]
        if self.problem.visibility:
            for uav_id, _ in self.neighbors:
                labels += [f"visibility.{uav_id}.k{k}" for k in steps]
        return labels

    def row_labels(self) -> List[str]:
        """Names of all constraint rows, equality rows first."""
        labels = [f"init[{i}]" for i in range(6)]
        for k in range(self.N):
            labels += [f"dynamics.k{k}[{i}]" for i in range(6)]
        return labels + self._inequality_labels()

    def inequalities(self, z: np.ndarray) -> Tuple[np.ndarray, sparse.csr_matrix]:
        x = self.states(z).copy()
        x[0] = self.x0
        p = x[:, :3]
        v = x[:, 3:]
        rows = _RowCollector(self.N)

        for zone in self.zones:
            sd, grad = zone.smooth_distance(p[:, :2])
            rows.add(sd - zone.margin, np.column_stack([grad, np.zeros(len(grad))]))

        r_col = self.bounds.r_col
        for positions, radius in self.obstacles + [(pos, r_col) for _, pos in self.neighbors]:
            diff = p - positions
            rows.add(np.sum(diff * diff, axis=1) - radius**2, 2.0 * diff)

        q = p - self.target_p
        if self.bounds.theta is not None:
            lo, hi = self.bounds.theta
            theta, dtheta = guarded_pitch(q)
            rows.add(theta - lo, dtheta)
            rows.add(hi - theta, -dtheta)

        if self.yaw_window is not None:
            center, half = self.yaw_window
            value, dq, dv = guarded_yaw_cosine(q, v, center)
            rows.add(value - math.cos(half), dq, dv)

        if self.problem.visibility:
            cos_alpha = math.cos(self.bounds.alpha)
            nq = np.linalg.norm(q, axis=1)
            for _, positions in self.neighbors:
                d = p - positions
                nd = np.linalg.norm(d, axis=1)
                ok = (nd >= GUARDS.visibility_skip) & (nq >= GUARDS.visibility_skip)
                nq_s = np.where(ok, nq, 1.0)
                nd_s = np.where(ok, nd, 1.0)
                cos_beta = np.where(ok, np.sum(q * d, axis=1) / (nq_s * nd_s), 0.0)
                dcos_dq = d / (nq_s * nd_s)[:, None] - cos_beta[:, None] * q / (nq_s**2)[:, None]
                dcos_dd = q / (nq_s * nd_s)[:, None] - cos_beta[:, None] * d / (nd_s**2)[:, None]
                grad = np.where(ok[:, None], -(dcos_dq + dcos_dd), 0.0)
                rows.add(cos_alpha - cos_beta, grad)

        values = np.concatenate(rows.values) if rows.values else np.zeros(0)
        if rows.rows:
            jac = sparse.csr_matrix(
                (np.concatenate(rows.data), (np.concatenate(rows.rows), np.concatenate(rows.cols))),
                shape=(rows.offset, self.n),
            )
        else:
            jac = sparse.csr_matrix((0, self.n))
        return values, jac

    def constraints(self, z: np.ndarray) -> Tuple[np.ndarray, sparse.csr_matrix]:
        c_eq = self._a_eq @ z - self._b_eq
        c_in, j_in = self.inequalities(z)
        return np.concatenate([c_eq, c_in]), sparse.vstack([self._a_eq, j_in], format="csr")

    # Initial guesses --------------------------------------------------------

    def _rollout_clipped(self, controls: np.ndarray) -> np.ndarray:
        b = self.bounds
        states = np.empty((self.N + 1, 6))
        states[0] = self.x0
        for k in range(self.N):
            controls[k] = np.clip(controls[k], b.u_min, b.u_max)
            states[k + 1] = step_rk4_batch(states[k : k + 1], controls[k : k + 1], self.dt)[0]
        return self.pack(states, controls)

    def hover_guess(self) -> np.ndarray:
        """Rollout that brakes from the measured velocity to hover."""
        b = self.bounds
        states = np.empty((self.N + 1, 6))
        controls = np.empty((self.N, 3))
        states[0] = self.x0
        for k in range(self.N):
            controls[k] = np.clip(-states[k, 3:] / self.dt, b.u_min, b.u_max)
            states[k + 1] = step_rk4_batch(states[k : k + 1], controls[k : k + 1], self.dt)[0]
        return self.pack(states, controls)

    def initial_guess(self) -> np.ndarray:
        return self.hover_guess()

    def warm_start(self, previous_controls: np.ndarray, shift: int) -> np.ndarray:
        """
        Guess built from a previous plan's controls advanced by ``shift`` steps.

        Missing tail controls are zero; the states are re-integrated from the
        measured state so the guess satisfies the dynamics rows exactly.
        """
        prev = np.asarray(previous_controls, dtype=float).reshape(-1, 3)[max(shift, 0) :]
        controls = np.zeros((self.N, 3))
        m = min(len(prev), self.N)
        controls[:m] = prev[:m]
        return self._rollout_clipped(controls)

    def max_violation(self, z: np.ndarray) -> float:
        c, _ = self.constraints(z)
        eq = np.abs(c[: self.n_eq])
        ineq = np.maximum(0.0, -c[self.n_eq :])
        box = np.maximum(np.maximum(self.lower - z, z - self.upper), 0.0)
        return float(max(eq.max(initial=0.0), ineq.max(initial=0.0), box.max(initial=0.0)))


def build(problem: OcpProblem) -> TranscribedNlp:
    """Transcribe ``problem`` into a :class:`TranscribedNlp`."""
    return TranscribedNlp(problem)


def cost_and_gradient(nlp: TranscribedNlp, z: np.ndarray) -> Tuple[float, np.ndarray]:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise NonFiniteInputError("Decision vector contains non-finite values")
    return nlp.objective(z)


def constraints_and_jacobian(
    nlp: TranscribedNlp, z: np.ndarray
) -> Tuple[np.ndarray, sparse.csr_matrix]:
    """Residuals in :meth:`TranscribedNlp.row_labels` order and their sparse jacobian."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise NonFiniteInputError("Decision vector contains non-finite values")
    c, jac = nlp.constraints(z)
    if not np.all(np.isfinite(c)):
        raise FloatingPointError("Constraint evaluation overflowed")
    return c, jac
