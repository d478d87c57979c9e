"""The demon's noisy two-outcome measurement.

Record ``y = 0`` reports the lower level and ``y = 1`` the upper level, so
record ``y`` and state index ``y`` name the same level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .thermo import Distribution, StateSpace

ZETA_MEASURED = 1.94
RECORDS = (0, 1)


@dataclass(frozen=True)
class ErrorModel:
    """Exponential error law of the depumping pulse.

    ``theta`` is the pulse area Omega_2 * tau_2 and ``zeta`` the fitted decay
    constant per unit area.
    """
    zeta: float = ZETA_MEASURED
    theta: float = 0.0

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if not self.theta >= 0:
            raise ValueError("theta must be non-negative")


def error_from_pulse(model: ErrorModel) -> float:
    """epsilon = 1 - exp(-zeta * theta)."""
    return -math.expm1(-model.zeta * model.theta)


@dataclass(frozen=True)
class MeasurementOutcomeTable:
    """Joint statistics p(x0, y) of the true state and the record.

    ``joint`` is indexed ``[x0, y]``. ``epsilon`` holds the per-state error
    probabilities ``(p(y=1 | down), p(y=0 | up))``.
    """
    space: StateSpace
    joint: np.ndarray = field(repr=False)
    epsilon: tuple

    def __post_init__(self):
        j = np.array(self.joint, dtype=float)
        if j.shape != (self.space.size, len(RECORDS)):
            raise ValueError(f"joint table has shape {j.shape}")
        if abs(math.fsum(j.ravel()) - 1.0) > 1e-12:
            raise ValueError("joint table does not sum to 1")
        j.setflags(write=False)
        object.__setattr__(self, "joint", j)

    @property
    def marginal_state(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def marginal_record(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    @property
    def conditional_state(self) -> np.ndarray:
        """p(x0 | y) indexed [x0, y]; columns of records with p(y) = 0 are zero."""
        py = self.marginal_record
        out = np.zeros_like(self.joint)
        for y in RECORDS:
            if py[y] > 0:
                out[:, y] = self.joint[:, y] / py[y]
        return out

    @property
    def conditional_record(self) -> np.ndarray:
        """p(y | x0) indexed [x0, y]."""
        px = self.marginal_state
        out = np.zeros_like(self.joint)
        for x in range(self.space.size):
            if px[x] > 0:
                out[x, :] = self.joint[x, :] / px[x]
        return out

    @property
    def symmetric(self) -> bool:
        return self.epsilon[0] == self.epsilon[1]

    def p_record(self, y: int) -> float:
        return float(self.marginal_record[y])


def measure(p_eq: Distribution, epsilon: float,
            epsilon_up: float | None = None) -> MeasurementOutcomeTable:
    """Build p(x0, y) for a two-level prior and a (by default symmetric) error.

    ``epsilon`` is p(y != x0 | x0 = down); ``epsilon_up`` is the same for the
    upper level and defaults to ``epsilon``.
    """
    if p_eq.space.size != 2:
        raise ValueError("measure() needs a two-level prior")
    eps_up = epsilon if epsilon_up is None else epsilon_up
    for e in (epsilon, eps_up):
        if not 0.0 <= e <= 1.0:
            raise ValueError(f"error probability {e} outside [0, 1]")
    like = np.array([[1.0 - epsilon, epsilon],
                     [eps_up, 1.0 - eps_up]])
    joint = p_eq.probabilities[:, None] * like
    return MeasurementOutcomeTable(p_eq.space, joint, (float(epsilon), float(eps_up)))
