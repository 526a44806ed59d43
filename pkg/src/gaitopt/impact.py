"""Plastic touchdown impulse and the post-impact leg relabel.

Touchdown is modeled in the stance-pinned chart: an impulsive ground
reaction acts at the landing foot so that its velocity is zero
immediately after contact, while positions are unchanged.  The rate jump
solves ``M dqdot = J^T imp`` together with ``J qdot_plus = 0``, i.e. the
post-impact rates are the inertia-orthogonal projection of the
pre-impact rates onto the zero-foot-velocity subspace (kinetic energy
can only decrease).

After the impulse the legs swap roles.  Because the swing-side joint
angles mirror the stance side (see :mod:`gaitopt.model`), the swap is a
constant linear involution on joint coordinates: knees exchange with
knees keeping their sign, thigh coordinates exchange with a sign flip,
and the new stance-shin angle is the old swing-shin absolute angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    ABS_TO_REL,
    N_JOINTS,
    REL_TO_ABS,
    RobotParams,
    mass_matrix,
    swing_foot_jacobian,
    swing_foot_position,
)

RANK_TOLERANCE = 1e10
GROUND_TOLERANCE = 1e-8


class RankDeficientError(RuntimeError):
    """Contact operator J M^-1 J^T is numerically singular (legs folded
    onto the pivot); the gait is treated as infeasible, not fatal."""


@dataclass(frozen=True)
class ImpactOutcome:
    """Rates after a plastic touchdown and the ground impulse causing them."""

    qdot_plus: np.ndarray
    impulse: np.ndarray
    qdot_minus: np.ndarray


@dataclass(frozen=True)
class RelabelMaps:
    """Constant coordinate maps tying consecutive steps together.

    ``rel_from_abs`` converts absolute link angles to joint coordinates,
    ``swap`` exchanges the legs' absolute angles in the world frame, and
    ``relabel = rel_from_abs @ swap @ rel_from_abs^-1`` is the resulting
    involution on joint coordinates.
    """

    rel_from_abs: np.ndarray
    swap: np.ndarray
    relabel: np.ndarray


def default_relabel_maps() -> RelabelMaps:
    swap = np.fliplr(np.eye(N_JOINTS))
    relabel = ABS_TO_REL @ swap @ REL_TO_ABS
    return RelabelMaps(rel_from_abs=ABS_TO_REL.copy(), swap=swap, relabel=relabel)


def relabel_state(q: np.ndarray, qdot: np.ndarray, maps: RelabelMaps | None = None):
    """Describe the same physical state from the other leg's chart."""
    if maps is None:
        maps = default_relabel_maps()
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    return maps.relabel @ q, maps.relabel @ qdot


def impact_velocity_map(
    q_minus: np.ndarray,
    qdot_minus: np.ndarray,
    params: RobotParams,
    ground_tol: float = GROUND_TOLERANCE,
) -> ImpactOutcome:
    """Rate jump of a plastic, no-slip touchdown of the swing foot.

    ``ground_tol`` bounds how far from the ground the landing foot may
    be; pass ``numpy.inf`` to skip the admissibility check (used when the
    caller accounts for foot placement separately).
    """
    q_minus = np.asarray(q_minus, dtype=float)
    qdot_minus = np.asarray(qdot_minus, dtype=float)
    height = swing_foot_position(q_minus, params)[1]
    if abs(height) > ground_tol:
        raise ValueError(f"swing foot is {height:.3e} m off the ground at impact")
    m = mass_matrix(q_minus, params)
    jac = swing_foot_jacobian(q_minus, params)
    m_inv_jt = np.linalg.solve(m, jac.T)
    contact_op = jac @ m_inv_jt
    eigs = np.linalg.eigvalsh(contact_op)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > RANK_TOLERANCE:
        raise RankDeficientError("contact operator is singular: legs folded onto the pivot")
    foot_vel = jac @ qdot_minus
    impulse = np.linalg.solve(contact_op, -foot_vel)
    qdot_plus = qdot_minus + m_inv_jt @ impulse
    return ImpactOutcome(qdot_plus=qdot_plus, impulse=impulse, qdot_minus=qdot_minus)


def impact_invariance_residual(gait, params: RobotParams, maps: RelabelMaps | None = None) -> np.ndarray:
    """Mismatch between relabeled post-impact rates and the step-initial rates.

    Zero residual means the rate profile is periodic across touchdown.
    Raises :class:`RankDeficientError` when the impact map is singular.
    """
    from .trajectory import eval_gait

    if maps is None:
        maps = default_relabel_maps()
    q0, qd0, _ = eval_gait(gait, 0.0)
    q_end, qd_end, _ = eval_gait(gait, gait.duration)
    outcome = impact_velocity_map(q_end, qd_end, params, ground_tol=np.inf)
    return maps.relabel @ outcome.qdot_plus - qd0
