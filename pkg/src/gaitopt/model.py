"""Kinematics and pinned-stance dynamics of a planar five-link biped.

The robot is a point-foot chain: stance shin, stance thigh, trunk, swing
thigh, swing shin.  During single support the stance foot is pinned at
the world origin, +x is the walking direction and +y is up, which leaves
five degrees of freedom driven by four torques (one per hip and knee, no
ankle actuator).

Angle conventions used throughout the package:

* Absolute link angles ``theta`` are measured from the upward vertical,
  positive tilting toward +x.  A link at absolute angle ``t`` points
  along ``(sin t, cos t)``.
* ``q[0]`` is the stance-shin absolute angle, ``q[1]`` and ``q[4]`` the
  stance/swing knee flexions (non-negative while the knee vertex points
  forward), ``q[2]`` the trunk angle relative to the stance thigh and
  ``q[3]`` the swing-thigh angle relative to the trunk.  The swing-side
  accumulation signs mirror the stance side, so the post-touchdown leg
  swap is a pure linear map that keeps knee flexion non-negative.
* Every absolute angle carries ``q[0]`` with coefficient one: ``q[0]``
  rigidly rotates the whole chain about the pin and is the unactuated
  coordinate.  Row 0 of the equations of motion receives no torque.

All dynamics functions broadcast over leading axes (``q`` of shape
``(..., 5)``); the constraint layer relies on this for grid evaluation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

N_JOINTS = 5

# theta = q @ REL_TO_ABS.T accumulates joint angles into absolute link
# angles; ABS_TO_REL is its exact integer inverse.
REL_TO_ABS = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, -1.0, 0.0, 0.0, 0.0],
        [1.0, -1.0, -1.0, 0.0, 0.0],
        [1.0, -1.0, -1.0, -1.0, 0.0],
        [1.0, -1.0, -1.0, -1.0, 1.0],
    ]
)
ABS_TO_REL = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, -1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, -1.0, 1.0],
    ]
)


class UnreachableError(ValueError):
    """Requested hip/foot placement violates a leg's triangle inequality."""


class SingularPoseWarning(UserWarning):
    """A leg is exactly fully extended; the two knee solutions coincide."""


@dataclass(frozen=True)
class RobotParams:
    """Masses, inertias, lengths and COM offsets of the five links.

    Link order: stance shin, stance thigh, trunk, swing thigh, swing
    shin.  ``com_offsets`` measure each link's center of mass from the
    joint nearest the hip (the knee for shins, the hip for thighs and
    trunk; the trunk COM sits above the hip along the trunk axis).
    """

    masses: np.ndarray
    inertias: np.ndarray
    lengths: np.ndarray
    com_offsets: np.ndarray
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("masses", "inertias", "lengths", "com_offsets"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_JOINTS,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be {N_JOINTS} finite values")
            object.__setattr__(self, name, arr)
        if np.any(self.masses <= 0.0) or np.any(self.lengths <= 0.0):
            raise ValueError("masses and lengths must be strictly positive")
        if np.any(self.inertias < 0.0) or np.any(self.com_offsets < 0.0):
            raise ValueError("inertias and com offsets must be non-negative")
        if np.any(self.com_offsets > self.lengths):
            raise ValueError("com offsets cannot exceed link lengths")
        if not np.isfinite(self.gravity) or self.gravity <= 0.0:
            raise ValueError("gravity must be positive")

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


def rabbit_params() -> RobotParams:
    """Parameters of the RABBIT planar biped testbed."""
    return RobotParams(
        masses=(3.2, 6.8, 20.0, 6.8, 3.2),
        inertias=(0.93, 1.08, 2.22, 1.08, 0.93),
        lengths=(0.4, 0.4, 0.625, 0.4, 0.4),
        com_offsets=(0.128, 0.163, 0.2, 0.163, 0.128),
    )


@dataclass(frozen=True)
class JointState:
    """Joint angles and angular rates of the stance-pinned chain."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        for name in ("q", "qdot"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_JOINTS,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be {N_JOINTS} finite values")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class ChainGeometry:
    """World positions of the joints and centers of mass for one pose."""

    stance_foot: np.ndarray
    knee: np.ndarray
    hip: np.ndarray
    trunk_tip: np.ndarray
    swing_knee: np.ndarray
    swing_foot: np.ndarray
    link_coms: np.ndarray
    com: np.ndarray


def relative_to_absolute(q_rel: np.ndarray) -> np.ndarray:
    """Accumulate joint angles into absolute link angles."""
    return np.asarray(q_rel, dtype=float) @ REL_TO_ABS.T


def absolute_to_relative(q_abs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`relative_to_absolute` (exact integer matrix)."""
    return np.asarray(q_abs, dtype=float) @ ABS_TO_REL.T


def _link_dirs(theta):
    """Unit vectors along each link, (..., 5, 2)."""
    return np.stack((np.sin(theta), np.cos(theta)), axis=-1)


def _link_dir_rates(theta):
    """d/dtheta of :func:`_link_dirs`."""
    return np.stack((np.cos(theta), -np.sin(theta)), axis=-1)


def _com_coefficients(params: RobotParams) -> np.ndarray:
    """Coefficients A with com_i = sum_j A[i, j] * dir(theta_j)."""
    l1, l2, _, l4, l5 = params.lengths
    d1, d2, d3, d4, d5 = params.com_offsets
    return np.array(
        [
            [l1 - d1, 0.0, 0.0, 0.0, 0.0],
            [l1, l2 - d2, 0.0, 0.0, 0.0],
            [l1, l2, d3, 0.0, 0.0],
            [l1, l2, 0.0, -d4, 0.0],
            [l1, l2, 0.0, -l4, -d5],
        ]
    )


def _swing_foot_coefficients(params: RobotParams) -> np.ndarray:
    l1, l2, _, l4, l5 = params.lengths
    return np.array([l1, l2, 0.0, -l4, -l5])


def forward_kinematics(q: np.ndarray, params: RobotParams) -> ChainGeometry:
    """Joint, link-COM and total-COM positions for a single pose."""
    q = np.asarray(q, dtype=float)
    if q.shape != (N_JOINTS,):
        raise ValueError("forward_kinematics expects a single 5-vector")
    theta = relative_to_absolute(q)
    dirs = _link_dirs(theta)
    l1, l2, l3, l4, l5 = params.lengths
    knee = l1 * dirs[0]
    hip = knee + l2 * dirs[1]
    trunk_tip = hip + l3 * dirs[2]
    swing_knee = hip - l4 * dirs[3]
    swing_foot = swing_knee - l5 * dirs[4]
    link_coms = _com_coefficients(params) @ dirs
    com = params.masses @ link_coms / params.total_mass
    return ChainGeometry(
        stance_foot=np.zeros(2),
        knee=knee,
        hip=hip,
        trunk_tip=trunk_tip,
        swing_knee=swing_knee,
        swing_foot=swing_foot,
        link_coms=link_coms,
        com=com,
    )


def swing_foot_position(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """Swing-foot position, broadcasting over leading axes of ``q``."""
    theta = relative_to_absolute(q)
    return np.einsum("j,...jc->...c", _swing_foot_coefficients(params), _link_dirs(theta))


def swing_foot_jacobian(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """Jacobian of the swing-foot position w.r.t. q, shape (..., 2, 5)."""
    theta = relative_to_absolute(q)
    cols = _swing_foot_coefficients(params)[:, None] * _link_dir_rates(theta)[..., :, :]
    # cols[..., j, :] = coeff_j * d dir_j / d theta_j; chain through theta = S q
    j_theta = np.swapaxes(cols, -1, -2)
    return j_theta @ REL_TO_ABS


def mass_matrix(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """Inertia matrix of the pinned chain, shape (..., 5, 5)."""
    theta = relative_to_absolute(q)
    a = _com_coefficients(params)
    pair = (a * params.masses[:, None]).T @ a
    dth = theta[..., :, None] - theta[..., None, :]
    m_theta = pair * np.cos(dth) + np.diag(params.inertias)
    return np.einsum("ja,...jl,lb->...ab", REL_TO_ABS, m_theta, REL_TO_ABS)


_ACCUM_OUTER = np.einsum("lb,lc->lbc", REL_TO_ABS, REL_TO_ABS)


def _mass_matrix_gradient(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """dM/dq as a tensor DM[..., a, b, c] = d M[a,b] / d q[c].

    With sd[j, l] = pair[j, l] sin(theta_j - theta_l) antisymmetric, the
    chain-rule contraction collapses to one term plus its (a, b) swap.
    """
    theta = relative_to_absolute(q)
    a = _com_coefficients(params)
    pair = (a * params.masses[:, None]).T @ a
    dth = theta[..., :, None] - theta[..., None, :]
    sd = pair * np.sin(dth)
    inner = np.einsum("...jl,lbc->...jbc", sd, _ACCUM_OUTER)
    half = np.einsum("ja,...jbc->...abc", REL_TO_ABS, inner)
    return half + np.swapaxes(half, -3, -2)


def bias_and_gravity(q: np.ndarray, qdot: np.ndarray, params: RobotParams):
    """Coriolis matrix (from Christoffel symbols) and gravity vector.

    Building C from the Christoffel symbols of the inertia matrix makes
    dM/dt - 2C exactly skew-symmetric, which the tests rely on.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    dm = _mass_matrix_gradient(q, params)
    cor = 0.5 * (
        np.einsum("...abc,...c->...ab", dm, qdot)
        + np.einsum("...acb,...c->...ab", dm, qdot)
        - np.einsum("...cba,...c->...ab", dm, qdot)
    )
    theta = relative_to_absolute(q)
    weights = params.masses @ _com_coefficients(params)
    g_theta = -params.gravity * weights * np.sin(theta)
    grav = g_theta @ REL_TO_ABS
    return cor, grav


def joint_accelerations(q, qdot, torques, params: RobotParams) -> np.ndarray:
    """Accelerations under hip/knee torques; row 0 is torque-free."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    torques = np.asarray(torques, dtype=float)
    m = mass_matrix(q, params)
    cor, grav = bias_and_gravity(q, qdot, params)
    gen_force = np.zeros(q.shape[:-1] + (N_JOINTS,))
    gen_force[..., 1:] = torques
    rhs = gen_force - np.einsum("...ab,...b->...a", cor, qdot) - grav
    return np.linalg.solve(m, rhs[..., None])[..., 0]


def forward_dynamics(state: JointState, torques: np.ndarray, params: RobotParams) -> np.ndarray:
    """Joint accelerations for one state; wraps :func:`joint_accelerations`."""
    return joint_accelerations(state.q, state.qdot, torques, params)


def kinetic_energy(q, qdot, params: RobotParams):
    m = mass_matrix(q, params)
    qdot = np.asarray(qdot, dtype=float)
    return 0.5 * np.einsum("...a,...ab,...b->...", qdot, m, qdot)


def potential_energy(q, params: RobotParams):
    theta = relative_to_absolute(q)
    weights = params.masses @ _com_coefficients(params)
    return params.gravity * np.cos(theta) @ weights


def total_energy(q, qdot, params: RobotParams):
    return kinetic_energy(q, qdot, params) + potential_energy(q, params)


def com_position(q, params: RobotParams):
    theta = relative_to_absolute(q)
    weights = params.masses @ _com_coefficients(params)
    return np.einsum("j,...jc->...c", weights, _link_dirs(theta)) / params.total_mass


def com_velocity(q, qdot, params: RobotParams):
    theta = relative_to_absolute(q)
    theta_dot = relative_to_absolute(qdot)
    weights = params.masses @ _com_coefficients(params)
    return np.einsum("j,...j,...jc->...c", weights, theta_dot, _link_dir_rates(theta)) / params.total_mass


def com_acceleration(q, qdot, qddot, params: RobotParams):
    theta = relative_to_absolute(q)
    theta_dot = relative_to_absolute(qdot)
    theta_ddot = relative_to_absolute(qddot)
    weights = params.masses @ _com_coefficients(params)
    acc = np.einsum("j,...j,...jc->...c", weights, theta_ddot, _link_dir_rates(theta))
    acc -= np.einsum("j,...j,...jc->...c", weights, theta_dot**2, _link_dirs(theta))
    return acc / params.total_mass


def angular_momentum(q, qdot, params: RobotParams, about=(0.0, 0.0)) -> float:
    """Total angular momentum (z component, counterclockwise positive)
    about a fixed world point."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    theta = relative_to_absolute(q)
    theta_dot = relative_to_absolute(qdot)
    a = _com_coefficients(params)
    pos = np.einsum("ij,...jc->...ic", a, _link_dirs(theta))
    vel = np.einsum("ij,...j,...jc->...ic", a, theta_dot, _link_dir_rates(theta))
    rel = pos - np.asarray(about, dtype=float)
    cross = rel[..., 0] * vel[..., 1] - rel[..., 1] * vel[..., 0]
    # theta grows clockwise in standard orientation, so omega_z = -theta_dot
    spin = params.inertias * theta_dot
    return np.einsum("...i,i->...", cross, params.masses) - spin.sum(axis=-1)


def _two_link_angles(target: np.ndarray, l_near: float, l_far: float, bend: float):
    """Solve a planar two-link chain for (flexion, absolute near-link angle).

    ``bend`` is +1 when the far link accumulates as theta_far =
    theta_near + flexion and -1 for theta_far = theta_near - flexion.
    Flexion is returned in [0, pi] (the forward-vertex knee branch).
    """
    dist2 = float(target @ target)
    dist = np.sqrt(dist2)
    if dist > l_near + l_far + 1e-9:
        raise UnreachableError(f"target at {dist:.4f} m exceeds leg length {l_near + l_far:.4f} m")
    if dist < abs(l_near - l_far) - 1e-9 or dist < 1e-12:
        raise UnreachableError("target is inside the chain's inner workspace boundary")
    cos_flex = (dist2 - l_near**2 - l_far**2) / (2.0 * l_near * l_far)
    if cos_flex >= 1.0 - 1e-12:
        warnings.warn("leg fully extended: knee solutions coincide", SingularPoseWarning)
    flex = float(np.arccos(np.clip(cos_flex, -1.0, 1.0)))
    heading = np.arctan2(target[0], target[1])
    spread = np.arctan2(bend * l_far * np.sin(flex), l_near + l_far * np.cos(flex))
    return flex, float(heading - spread)


def inverse_kinematics(hip, swing_foot, trunk_angle: float, params: RobotParams) -> np.ndarray:
    """Joint angles that place the hip, swing foot and trunk as requested.

    Of the four geometric solutions, returns the one with both knee
    flexions in [0, pi) (forward-pointing knees).  Raises
    :class:`UnreachableError` when a leg's triangle inequality fails and
    warns with :class:`SingularPoseWarning` at exact full extension.
    """
    hip = np.asarray(hip, dtype=float)
    swing_foot = np.asarray(swing_foot, dtype=float)
    l1, l2, _, l4, l5 = params.lengths
    knee_stance, theta1 = _two_link_angles(hip, l1, l2, bend=-1.0)
    knee_swing, theta4 = _two_link_angles(hip - swing_foot, l4, l5, bend=+1.0)
    theta2 = theta1 - knee_stance
    q3 = theta2 - trunk_angle
    q4 = trunk_angle - theta4
    return np.array([theta1, knee_stance, q3, q4, knee_swing])
