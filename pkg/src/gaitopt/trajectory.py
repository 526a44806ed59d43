"""Quartic joint trajectories and the 15 free shape parameters.

Each joint follows a degree-4 polynomial of time.  The constant term is
pinned by the step-initial configuration and the quartic term is solved
so the step-final configuration is hit exactly, leaving the three middle
coefficients of each joint free: 5 joints x 3 = 15 optimization
variables.  Boundary configurations therefore hold to machine precision
for every candidate and never enter the penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import N_JOINTS

POLY_ORDER = 4
N_FREE_PARAMS = N_JOINTS * (POLY_ORDER - 1)  # 15


@dataclass(frozen=True)
class PolynomialGait:
    """Coefficients ``alpha[k, i]`` of joint k on t**i, plus step duration."""

    alpha: np.ndarray
    duration: float

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (N_JOINTS, POLY_ORDER + 1) or not np.all(np.isfinite(alpha)):
            raise ValueError("alpha must be a finite 5x5 coefficient array")
        object.__setattr__(self, "alpha", alpha)
        if not (np.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError("duration must be positive and finite")


def eval_gait(gait: PolynomialGait, t, extrapolate: bool = False):
    """Angles, rates and accelerations at time(s) t; exact derivatives.

    Raises ValueError outside [0, duration] unless ``extrapolate``.
    """
    t = np.asarray(t, dtype=float)
    if not extrapolate and (np.any(t < -1e-12) or np.any(t > gait.duration + 1e-12)):
        raise ValueError(f"time outside [0, {gait.duration}]")
    powers = t[..., None] ** np.arange(POLY_ORDER + 1)
    a = gait.alpha
    q = powers @ a.T
    qd = powers[..., :POLY_ORDER] @ (a[:, 1:] * np.arange(1, POLY_ORDER + 1)).T
    qdd = powers[..., : POLY_ORDER - 1] @ (a[:, 2:] * (2.0, 6.0, 12.0)).T
    return q, qd, qdd


def assemble_gait(z, q_init, q_final, duration: float) -> PolynomialGait:
    """Build a gait from the 15 free parameters and exact boundary data."""
    z = np.asarray(z, dtype=float)
    if z.shape != (N_FREE_PARAMS,):
        raise ValueError(f"expected {N_FREE_PARAMS} free parameters, got shape {z.shape}")
    alpha = np.empty((N_JOINTS, POLY_ORDER + 1))
    alpha[:, 0] = np.asarray(q_init, dtype=float)
    alpha[:, 1:POLY_ORDER] = z.reshape(N_JOINTS, POLY_ORDER - 1)
    partial = alpha[:, :POLY_ORDER] @ duration ** np.arange(POLY_ORDER)
    alpha[:, POLY_ORDER] = (np.asarray(q_final, dtype=float) - partial) / duration**POLY_ORDER
    return PolynomialGait(alpha=alpha, duration=float(duration))


def extract_free_params(gait: PolynomialGait) -> np.ndarray:
    """Inverse of the packing used by :func:`assemble_gait`."""
    return gait.alpha[:, 1:POLY_ORDER].reshape(-1).copy()


def gait_to_flat(gait: PolynomialGait) -> np.ndarray:
    """Serialize as the 25 coefficients (joint-major) followed by the duration."""
    return np.concatenate([gait.alpha.reshape(-1), [gait.duration]])


def gait_from_flat(values) -> PolynomialGait:
    values = np.asarray(values, dtype=float)
    if values.shape != (N_JOINTS * (POLY_ORDER + 1) + 1,):
        raise ValueError("gait serialization must hold 25 coefficients plus the duration")
    return PolynomialGait(alpha=values[:-1].reshape(N_JOINTS, POLY_ORDER + 1), duration=float(values[-1]))
