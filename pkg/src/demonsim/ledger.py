"""Per-outcome entropy bookkeeping.

For a realised outcome (x0, y, x_c):

    sigma_cond   = ln q(x_c|y) - ln p_eq(x_c)
    sigma_uncond = ln p(x_c)   - ln p_eq(x_c)
    sigma_info   = ln q(x_c|y) - ln p(x_c)

so sigma_cond = sigma_uncond + sigma_info holds outcome by outcome. The
stochastic entropy changes compare the initial equilibrium surprisal with the
final one, which makes T <sigma_cond> = Delta F - W_out an identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ZeroProbabilityOutcome
from .protocols import ControlledDistributions
from .thermo import Distribution


@dataclass(frozen=True)
class EntropyLedger:
    sigma_cond: float
    sigma_uncond: float
    sigma_info: float
    delta_s_cond: float
    delta_s_coarse: float
    work: float
    heat: float

    @property
    def decomposition_residual(self) -> float:
        return self.sigma_cond - self.sigma_uncond - self.sigma_info

    def sigma(self, which: str) -> float:
        return {"cond": self.sigma_cond, "uncond": self.sigma_uncond,
                "info": self.sigma_info}[which]


def _log_probs(y, xc, cd: ControlledDistributions, p_eq: Distribution):
    k = cd.space.index(xc)
    q = float(cd.conditional[k, y])
    p = float(cd.marginal[k])
    peq = float(p_eq.probabilities[k])
    if q <= 0:
        raise ZeroProbabilityOutcome(
            f"zero-probability outcome: q(x_c={cd.space.labels[k]!r} | y={y}) = 0")
    if peq <= 0:
        raise ZeroProbabilityOutcome(
            f"reference weight p_eq({cd.space.labels[k]!r}) is zero")
    return math.log(q), math.log(p), math.log(peq)


def entropy_productions(y: int, xc, cd: ControlledDistributions,
                        p_eq: Distribution) -> tuple[float, float, float]:
    """Return (sigma_cond, sigma_uncond, sigma_info) for record ``y`` and outcome ``xc``.

    ``p_eq`` must live on the same output space as ``cd``.
    """
    lq, lp, leq = _log_probs(y, xc, cd, p_eq)
    sigma_cond = lq - leq
    sigma_uncond = lp - leq
    # computed from the two pieces so the decomposition is exact in floating point
    sigma_info = sigma_cond - sigma_uncond
    return sigma_cond, sigma_uncond, sigma_info


def stochastic_entropy_changes(x0, y: int, xc, cd: ControlledDistributions,
                               p_eq: Distribution) -> tuple[float, float]:
    """Return (Delta S_cond, Delta S_coarse) for a system-resolution outcome.

    Delta S_cond = ln q(x_c|y) - ln p_eq(x0) and Delta S_coarse uses p(x_c)
    in place of q(x_c|y).
    """
    lq, lp, _ = _log_probs(y, xc, cd, p_eq)
    p0 = p_eq[x0]
    if p0 <= 0:
        raise ZeroProbabilityOutcome(f"initial state {x0!r} has zero weight")
    l0 = math.log(p0)
    return lq - l0, lp - l0
