"""Objective and walking-feasibility constraints on a time grid.

A candidate gait is judged on a uniform grid over one step: torque-cost
objective (integral of the squared torque norm, composite Simpson),
knee-range / torque / rate / friction / normal-force / swing-clearance
inequalities, and the equalities that make the motion dynamically and
periodically possible - the torque-free row of the equations of motion
must vanish everywhere, and the relabeled post-impact rates must equal
the step-initial rates.  All evaluations are pure functions of the gait,
so candidate gaits can be scored concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .impact import RankDeficientError, RelabelMaps, default_relabel_maps, impact_velocity_map
from .model import (
    N_JOINTS,
    RobotParams,
    bias_and_gravity,
    com_acceleration,
    mass_matrix,
    swing_foot_position,
)
from .trajectory import PolynomialGait, eval_gait

INFEASIBLE_SENTINEL = 1e9

VIOLATION_NAMES = (
    "boundary",
    "knee",
    "clearance",
    "torque",
    "rate",
    "friction",
    "normal_force",
    "zero_dynamics",
    "impact_invariance",
)


@dataclass(frozen=True)
class GaitProblemConfig:
    """Bounds and gait targets for the walking problem."""

    q_init: np.ndarray
    q_final: np.ndarray
    knee_max_stance: float = 0.6
    knee_max_swing: float = 0.6
    tau_max: float = 150.0
    qdot_max: float = 5.0
    friction_mu: float = 0.7
    step_length: float = 0.5
    velocity: float = 1.0
    grid_size: int = 51
    violation_tol: float = 0.01
    clearance_margin: float = 1e-4
    min_normal_force: float = 1e-4

    def __post_init__(self):
        for name in ("q_init", "q_final"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_JOINTS,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be {N_JOINTS} finite values")
            object.__setattr__(self, name, arr)
        positive = (
            "knee_max_stance", "knee_max_swing", "tau_max", "qdot_max",
            "friction_mu", "step_length", "velocity", "violation_tol",
        )
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.grid_size < 10:
            raise ValueError("grid_size must be at least 10")

    @property
    def duration(self) -> float:
        """Step duration implied by the step length and average speed."""
        return self.step_length / self.velocity


@dataclass(frozen=True)
class ConstraintReport:
    """Per-constraint maximum violations and the torque-cost objective."""

    violations: dict[str, float]
    objective: float
    feasible: bool
    threshold: float

    @property
    def max_violation(self) -> float:
        return max(self.violations.values())

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "feasible": self.feasible,
            "threshold": self.threshold,
            "violations": dict(self.violations),
        }


@dataclass(frozen=True)
class GaitEvaluation:
    """Everything computed on the grid for one gait (internal workhorse)."""

    time: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray
    zero_dyn: np.ndarray
    torques: np.ndarray
    reactions: np.ndarray
    swing_foot: np.ndarray
    objective: float
    impact_residual: np.ndarray | None
    rank_deficient: bool


def inverse_dynamics_split(q, qdot, qddot, params: RobotParams):
    """Torque-free-row residual and the four joint torques.

    Row 0 of the equations of motion has no actuator, so its value along
    an arbitrary trajectory is a residual; rows 1..4 are solved exactly
    for the hip/knee torques.  Broadcasts over leading axes.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    qddot = np.asarray(qddot, dtype=float)
    m = mass_matrix(q, params)
    cor, grav = bias_and_gravity(q, qdot, params)
    gen = (
        np.einsum("...ab,...b->...a", m, qddot)
        + np.einsum("...ab,...b->...a", cor, qdot)
        + grav
    )
    return gen[..., 0], gen[..., 1:]


def ground_reaction(q, qdot, qddot, params: RobotParams) -> np.ndarray:
    """Stance-foot ground reaction from whole-chain Newton dynamics."""
    acc = com_acceleration(q, qdot, qddot, params)
    force = params.total_mass * acc
    force[..., 1] += params.total_mass * params.gravity
    return force


def objective(gait: PolynomialGait, params: RobotParams, grid_size: int = 51) -> float:
    """Integral of the squared torque norm over the step (Simpson)."""
    if grid_size < 10:
        raise ValueError("grid_size must be at least 10")
    t = np.linspace(0.0, gait.duration, grid_size)
    q, qd, qdd = eval_gait(gait, t)
    _, torques = inverse_dynamics_split(q, qd, qdd, params)
    return float(simpson(np.sum(torques**2, axis=-1), x=t))


def evaluate_gait_grid(
    gait: PolynomialGait,
    params: RobotParams,
    cfg: GaitProblemConfig,
    maps: RelabelMaps | None = None,
) -> GaitEvaluation:
    """Evaluate dynamics, reactions and the impact closure on the grid."""
    if maps is None:
        maps = default_relabel_maps()
    t = np.linspace(0.0, gait.duration, cfg.grid_size)
    q, qd, qdd = eval_gait(gait, t)
    zero_dyn, torques = inverse_dynamics_split(q, qd, qdd, params)
    reactions = ground_reaction(q, qd, qdd, params)
    foot = swing_foot_position(q, params)
    cost = float(simpson(np.sum(torques**2, axis=-1), x=t))
    impact_residual = None
    rank_deficient = False
    try:
        outcome = impact_velocity_map(q[-1], qd[-1], params, ground_tol=np.inf)
        impact_residual = maps.relabel @ outcome.qdot_plus - qd[0]
    except RankDeficientError:
        rank_deficient = True
    return GaitEvaluation(
        time=t,
        q=q,
        qdot=qd,
        qddot=qdd,
        zero_dyn=zero_dyn,
        torques=torques,
        reactions=reactions,
        swing_foot=foot,
        objective=cost,
        impact_residual=impact_residual,
        rank_deficient=rank_deficient,
    )


def equality_residuals(ev: GaitEvaluation) -> np.ndarray:
    """All equality residuals: torque-free row on the grid, impact
    closure, and swing-foot touchdown height."""
    impact = ev.impact_residual
    if impact is None:
        impact = np.full(N_JOINTS, INFEASIBLE_SENTINEL)
    return np.concatenate([ev.zero_dyn, impact, [ev.swing_foot[-1, 1]]])


def inequality_overages(ev: GaitEvaluation, cfg: GaitProblemConfig) -> np.ndarray:
    """Positive parts of every inequality constraint (zero when satisfied)."""
    knees = ev.q[:, (1, 4)]
    knee_caps = np.array([cfg.knee_max_stance, cfg.knee_max_swing])
    height = ev.swing_foot[1:-1, 1]
    f_x = ev.reactions[:, 0]
    f_y = ev.reactions[:, 1]
    return np.concatenate([
        np.clip(-knees, 0.0, None).reshape(-1),
        np.clip(knees - knee_caps, 0.0, None).reshape(-1),
        np.clip(cfg.clearance_margin - height, 0.0, None),
        np.clip(np.abs(ev.torques) - cfg.tau_max, 0.0, None).reshape(-1),
        np.clip(np.abs(ev.qdot) - cfg.qdot_max, 0.0, None).reshape(-1),
        np.clip(np.abs(f_x) - cfg.friction_mu * f_y, 0.0, None),
        np.clip(cfg.min_normal_force - f_y, 0.0, None),
    ])


def _max_or_zero(values) -> float:
    return float(np.max(values)) if np.size(values) else 0.0


def report_from_evaluation(
    ev: GaitEvaluation, cfg: GaitProblemConfig
) -> ConstraintReport:
    knees = ev.q[:, (1, 4)]
    knee_caps = np.array([cfg.knee_max_stance, cfg.knee_max_swing])
    height = ev.swing_foot[:, 1]
    f_x = ev.reactions[:, 0]
    f_y = ev.reactions[:, 1]
    if ev.rank_deficient:
        impact_violation = INFEASIBLE_SENTINEL
    else:
        impact_violation = _max_or_zero(np.abs(ev.impact_residual))
    violations = {
        "boundary": max(
            _max_or_zero(np.abs(ev.q[0] - cfg.q_init)),
            _max_or_zero(np.abs(ev.q[-1] - cfg.q_final)),
        ),
        "knee": max(
            _max_or_zero(np.clip(-knees, 0.0, None)),
            _max_or_zero(np.clip(knees - knee_caps, 0.0, None)),
        ),
        "clearance": max(
            _max_or_zero(np.clip(cfg.clearance_margin - height[1:-1], 0.0, None)),
            abs(float(height[0])),
            abs(float(height[-1])),
        ),
        "torque": _max_or_zero(np.clip(np.abs(ev.torques) - cfg.tau_max, 0.0, None)),
        "rate": _max_or_zero(np.clip(np.abs(ev.qdot) - cfg.qdot_max, 0.0, None)),
        "friction": _max_or_zero(np.clip(np.abs(f_x) - cfg.friction_mu * f_y, 0.0, None)),
        "normal_force": _max_or_zero(np.clip(cfg.min_normal_force - f_y, 0.0, None)),
        "zero_dynamics": _max_or_zero(np.abs(ev.zero_dyn)),
        "impact_invariance": impact_violation,
    }
    feasible = all(v <= cfg.violation_tol for v in violations.values())
    return ConstraintReport(
        violations=violations,
        objective=ev.objective,
        feasible=feasible,
        threshold=cfg.violation_tol,
    )


def evaluate_constraints(
    gait: PolynomialGait,
    params: RobotParams,
    cfg: GaitProblemConfig,
    maps: RelabelMaps | None = None,
) -> ConstraintReport:
    """Maximum violation of each walking constraint plus the objective."""
    ev = evaluate_gait_grid(gait, params, cfg, maps)
    return report_from_evaluation(ev, cfg)
