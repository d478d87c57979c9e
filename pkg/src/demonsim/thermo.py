"""Finite state spaces, Boltzmann equilibria and information measures.

Units follow k_B = E = 1: energies are in units of the qubit gap and all
entropic quantities are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import AbsolutelyIrreversibleError

DOWN = "down"
UP = "up"

NORM_TOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    labels: tuple
    energies: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        energies = tuple(float(e) for e in self.energies)
        if not labels:
            raise ValueError("state space must be non-empty")
        if len(set(labels)) != len(labels):
            raise ValueError("state labels must be unique")
        if len(energies) != len(labels):
            raise ValueError("one energy per label required")
        if not all(math.isfinite(e) for e in energies):
            raise ValueError("energies must be finite")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "energies", energies)

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def index(self, state: Hashable | int) -> int:
        """Resolve a label (or an already-integer index) to a position."""
        if isinstance(state, (int, np.integer)) and not isinstance(state, bool):
            if not 0 <= state < self.size:
                raise IndexError(f"state index {state} out of range")
            return int(state)
        try:
            return self.labels.index(state)
        except ValueError:
            raise KeyError(f"unknown state {state!r}") from None

    def energy(self, state) -> float:
        return self.energies[self.index(state)]


def two_level(gap: float = 1.0) -> StateSpace:
    """Qubit with |down> at energy 0 and |up> at energy ``gap``."""
    return StateSpace((DOWN, UP), (0.0, gap))


TWO_LEVEL = two_level()


@dataclass(frozen=True)
class ThermalContext:
    beta: float
    energy_gap: float = 1.0

    def __post_init__(self):
        if math.isnan(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not (self.energy_gap > 0 and math.isfinite(self.energy_gap)):
            raise ValueError("energy_gap must be positive and finite")

    @property
    def temperature(self) -> float:
        # beta = 0 is represented explicitly as an infinite temperature
        if self.beta == 0:
            return math.inf
        return 1.0 / self.beta

    @property
    def infinite_temperature(self) -> bool:
        return self.beta == 0

    @classmethod
    def from_temperature(cls, temperature: float, energy_gap: float = 1.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        beta = 0.0 if math.isinf(temperature) else 1.0 / temperature
        return cls(beta, energy_gap)

    def space(self) -> StateSpace:
        return two_level(self.energy_gap)


@dataclass(frozen=True)
class Distribution:
    space: StateSpace
    probabilities: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        if p.shape != (self.space.size,):
            raise ValueError(
                f"expected {self.space.size} probabilities, got shape {p.shape}")
        if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(math.fsum(p) - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    def __getitem__(self, state) -> float:
        return float(self.probabilities[self.space.index(state)])

    def __iter__(self):
        return iter(self.probabilities.tolist())

    def __len__(self):
        return self.space.size

    @property
    def support(self) -> np.ndarray:
        return self.probabilities > 0

    def as_dict(self) -> dict:
        return dict(zip(self.space.labels, self.probabilities.tolist()))

    def __repr__(self):
        return f"Distribution({self.as_dict()!r})"


def equilibrium_distribution(ctx: ThermalContext,
                             space: StateSpace | None = None) -> Distribution:
    """Boltzmann weights exp(-beta * energy), normalised.

    Energies are shifted by the ground energy before exponentiating, so very
    large ``beta`` underflows gracefully towards the ground state.
    """
    if space is None:
        space = ctx.space()
    e = np.asarray(space.energies, dtype=float)
    shifted = e - e.min()
    if math.isinf(ctx.beta):
        w = (shifted == 0).astype(float)
    else:
        w = np.exp(-ctx.beta * shifted)
    return Distribution(space, w / math.fsum(w))


@dataclass(frozen=True)
class PulsePrep:
    """Preparation pulse of area theta_c = Omega_1 * tau_1 (radians)."""
    theta_c: float

    def __post_init__(self):
        if not (0 < self.theta_c <= math.pi):
            raise ValueError(
                f"theta_c must lie in (0, pi], got {self.theta_c}")

    @property
    def p_down(self) -> float:
        return 0.5 * (1.0 + math.cos(self.theta_c))

    @property
    def p_up(self) -> float:
        return 0.5 * (1.0 - math.cos(self.theta_c))


def beta_from_prep_angle(prep: PulsePrep | float) -> float:
    """Effective inverse temperature ln[(1 + cos th) / (1 - cos th)].

    Angles past pi/2 give a negative value (population inversion); pi itself
    has no finite temperature and is rejected along with theta_c = 0.
    """
    if not isinstance(prep, PulsePrep):
        prep = PulsePrep(float(prep))
    c = math.cos(prep.theta_c)
    if abs(c) >= 1.0:
        raise ValueError(
            f"theta_c={prep.theta_c} gives a degenerate (infinite beta) state")
    # cos(pi/2) is 6e-17 in floating point; snap the exact-half case to zero
    if abs(c) < 1e-15:
        return 0.0
    return math.log1p(c) - math.log1p(-c)


def context_from_prep_angle(theta_c: float, energy_gap: float = 1.0):
    return ThermalContext(beta_from_prep_angle(theta_c), energy_gap)


def _as_array(d) -> np.ndarray:
    if isinstance(d, Distribution):
        return d.probabilities
    return np.asarray(d, dtype=float)


def shannon_entropy(d) -> float:
    """-sum p ln p with 0 ln 0 = 0."""
    p = _as_array(d)
    nz = p[p > 0]
    return -math.fsum(nz * np.log(nz))


def kl_divergence(p, q) -> float:
    """Relative entropy sum p ln(p/q).

    Raises AbsolutelyIrreversibleError when p puts mass where q has none.
    """
    if isinstance(p, Distribution) and isinstance(q, Distribution):
        if p.space != q.space:
            raise ValueError("distributions live on different state spaces")
    pa, qa = _as_array(p), _as_array(q)
    if pa.shape != qa.shape:
        raise ValueError("shape mismatch")
    bad = (pa > 0) & (qa == 0)
    if np.any(bad):
        raise AbsolutelyIrreversibleError(
            f"absolutely irreversible pair: p > 0 where q = 0 at "
            f"indices {np.flatnonzero(bad).tolist()}")
    m = pa > 0
    terms = pa[m] * (np.log(pa[m]) - np.log(qa[m]))
    # rounding can leave a -1e-17 residue for near-identical inputs
    return max(math.fsum(terms), 0.0)


def mutual_information(joint) -> float:
    """I(X;Y) of a joint table (array indexed [x, y] or an object with .joint)."""
    pxy = np.asarray(getattr(joint, "joint", joint), dtype=float)
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    terms = []
    for i, j in zip(*np.nonzero(pxy > 0)):
        terms.append(pxy[i, j] * (math.log(pxy[i, j])
                                  - math.log(px[i]) - math.log(py[j])))
    return math.fsum(terms)
