"""Exact enumeration over the finite outcome space (x0, y, x_c[, n_c]).

Every ensemble quantity in the package is a probability-weighted sum over
these atoms. Sums use ``math.fsum`` in a fixed atom order, so results are
reproducible bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DivergentObservableError
from .ledger import EntropyLedger, entropy_productions, stochastic_entropy_changes
from .measurement import RECORDS, MeasurementOutcomeTable
from .protocols import (SYSTEM, ControlledDistributions, FeedbackProtocol,
                        apply_control, reference_distribution)
from .thermo import Distribution

SIGMAS = ("cond", "uncond", "info")


@dataclass(frozen=True)
class OutcomeAtom:
    x0: int
    y: int
    xc: int
    probability: float
    ledger: EntropyLedger | None
    # final phonon number; None for protocols without a battery
    nc: int | None = None
    # index of the outcome in the output space the entropies were computed on
    out: int = 0


@dataclass(frozen=True)
class OutcomeSet(Sequence):
    """Atoms plus the distributions they were built from."""
    atoms: tuple
    protocol: FeedbackProtocol = field(repr=False)
    table: MeasurementOutcomeTable = field(repr=False)
    controlled: ControlledDistributions = field(repr=False)
    controlled_system: ControlledDistributions = field(repr=False)
    reference: Distribution = field(repr=False)
    p_eq: Distribution = field(repr=False)

    def __getitem__(self, i):
        return self.atoms[i]

    def __len__(self):
        return len(self.atoms)

    def __iter__(self) -> Iterator[OutcomeAtom]:
        return iter(self.atoms)

    @property
    def realized(self) -> list:
        return [a for a in self.atoms if a.probability > 0]


@dataclass(frozen=True)
class FtResult:
    value: float
    support_deficit: float
    which: str

    @property
    def total(self) -> float:
        return self.value + self.support_deficit


def _ledger(x0, y, xc, out, cd, cd_sys, ref, p_eq, mean_energy) -> EntropyLedger:
    s_cond, s_unc, s_info = entropy_productions(y, out, cd, ref)
    ds_cond, ds_coarse = stochastic_entropy_changes(x0, y, xc, cd_sys, p_eq)
    space = p_eq.space
    return EntropyLedger(
        sigma_cond=s_cond, sigma_uncond=s_unc, sigma_info=s_info,
        delta_s_cond=ds_cond, delta_s_coarse=ds_coarse,
        work=space.energies[x0] - space.energies[xc],
        # thermalisation heat averaged over the fresh equilibrium draw x_t
        heat=mean_energy - space.energies[xc])


def enumerate_outcomes(protocol: FeedbackProtocol, table: MeasurementOutcomeTable,
                       resolution: str = SYSTEM) -> OutcomeSet:
    """All (x0, y, x_c[, n_c]) atoms with weight p(x0, y) C_y(x_c | x0).

    Zero-weight atoms are kept (with ``ledger=None``) so callers can inspect
    the support structure.
    """
    p_eq = Distribution(table.space, table.marginal_state)
    cd = apply_control(protocol, table, resolution)
    cd_sys = cd if resolution == SYSTEM else apply_control(protocol, table, SYSTEM)
    ref = reference_distribution(protocol, p_eq, resolution)
    mean_energy = math.fsum(np.multiply(p_eq.probabilities,
                                        table.space.energies).tolist())
    joint = table.joint
    size = protocol.space.size
    bat = protocol.battery

    atoms = []
    for x0 in range(size):
        for y in RECORDS:
            pxy = float(joint[x0, y])
            for xc in range(size):
                if bat is None:
                    finals = [(None, xc, float(protocol.channel[y][xc, x0]))]
                else:
                    levels = bat.n_levels
                    block = bat.channel[y][xc * levels:(xc + 1) * levels,
                                           x0 * levels:(x0 + 1) * levels]
                    finals = []
                    for nc in range(levels):
                        t = math.fsum((block[nc] * bat.prior).tolist())
                        out = xc if resolution == SYSTEM else bat.index(xc, nc)
                        finals.append((nc, out, t))
                for nc, out, t in finals:
                    w = pxy * t
                    led = None
                    if w > 0:
                        led = _ledger(x0, y, xc, out, cd, cd_sys, ref, p_eq,
                                      mean_energy)
                    atoms.append(OutcomeAtom(x0, y, xc, w, led, nc, out))
    return OutcomeSet(tuple(atoms), protocol, table, cd, cd_sys, ref, p_eq)


def _support_deficit(outcomes: OutcomeSet, which: str) -> float:
    cd = outcomes.controlled
    ref = outcomes.reference.probabilities
    py = cd.record
    if which == "uncond":
        return math.fsum(ref[cd.marginal == 0].tolist())
    weights = ref if which == "cond" else cd.marginal
    terms = []
    for y in RECORDS:
        if py[y] == 0:
            continue
        missing = cd.conditional[:, y] == 0
        terms.append(py[y] * math.fsum(weights[missing].tolist()))
    return math.fsum(terms)


def ft_exponential_average(outcomes: OutcomeSet, which: str) -> FtResult:
    """<exp(-sigma)> over realised atoms, with the reference mass they miss.

    ``which`` is one of "cond", "uncond", "info". By construction
    ``value + support_deficit == 1``.
    """
    if which not in SIGMAS:
        raise ValueError(f"which must be one of {SIGMAS}")
    value = math.fsum(a.probability * math.exp(-a.ledger.sigma(which))
                      for a in outcomes.realized)
    return FtResult(value, _support_deficit(outcomes, which), which)


def exact_expectation(outcomes: OutcomeSet,
                      functional: Callable[[OutcomeAtom], float]) -> float:
    terms = []
    for a in outcomes.realized:
        v = functional(a)
        if not math.isfinite(v):
            raise DivergentObservableError(
                f"divergent observable on atom (x0={a.x0}, y={a.y}, xc={a.xc})")
        terms.append(a.probability * v)
    return math.fsum(terms)


def total_weight(outcomes: OutcomeSet) -> float:
    return math.fsum(a.probability for a in outcomes.atoms)
