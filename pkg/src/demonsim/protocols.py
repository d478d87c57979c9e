"""Feedback control channels conditioned on the measurement record.

A channel ``C_y`` is stored as a matrix indexed ``[x_c, x0]`` whose columns
are probability distributions over the controlled state. Work is attached to
the transition ``x0 -> x_c`` through the system energies only; the battery's
phonon energy is bookkept separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, TruncationError
from .measurement import RECORDS, MeasurementOutcomeTable
from .thermo import DOWN, UP, Distribution, StateSpace, ThermalContext, two_level

CHANNEL_TOL = 1e-12
TAIL_TOL = 1e-10

SYSTEM = "system"
COMPOSITE = "composite"
RESOLUTIONS = (SYSTEM, COMPOSITE)


def _check_channel(m: np.ndarray, size: int) -> np.ndarray:
    m = np.array(m, dtype=float)
    if m.shape != (size, size):
        raise DimensionMismatchError(
            f"channel has shape {m.shape}, expected {(size, size)}")
    if np.any(m < 0) or np.any(~np.isfinite(m)):
        raise ValueError("channel entries must be finite and non-negative")
    sums = m.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > CHANNEL_TOL):
        raise ValueError(f"channel columns sum to {sums.tolist()}")
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class Battery:
    """Phonon-mode extension of a two-level protocol.

    ``space`` enumerates composite states ``(x, n)`` in x-major order and
    ``channel`` holds the composite control matrices. ``prior`` is the
    phonon distribution before the control, independent of x0 and y.
    """
    space: StateSpace
    prior: np.ndarray = field(repr=False)
    channel: tuple = field(repr=False)

    @property
    def n_levels(self) -> int:
        return len(self.prior)

    def index(self, x: int, n: int) -> int:
        return x * self.n_levels + n

    def split(self, k: int) -> tuple[int, int]:
        return divmod(k, self.n_levels)

    @property
    def mean_phonons(self) -> float:
        return math.fsum(self.prior * np.arange(self.n_levels))


@dataclass(frozen=True)
class FeedbackProtocol:
    name: str
    space: StateSpace
    channel: tuple = field(repr=False)
    battery: Battery | None = field(default=None, repr=False)
    # True when the protocol's details are reconstructed rather than given
    reconstructed: bool = False
    notes: str = ""

    def __post_init__(self):
        if len(self.channel) != len(RECORDS):
            raise ValueError("need one channel per measurement record")
        chans = tuple(_check_channel(m, self.space.size) for m in self.channel)
        object.__setattr__(self, "channel", chans)

    def transition(self, y: int, x0, xc) -> float:
        return float(self.channel[y][self.space.index(xc), self.space.index(x0)])


def work_of_step(x0, xc, space: StateSpace) -> float:
    """Energy released by the system, E(x0) - E(x_c); negative means injected."""
    return space.energy(x0) - space.energy(xc)


def identity_protocol(space: StateSpace | None = None) -> FeedbackProtocol:
    space = space or two_level()
    eye = np.eye(space.size)
    return FeedbackProtocol("identity", space, (eye, eye))


def szilard_protocol(space: StateSpace | None = None) -> FeedbackProtocol:
    """On record 1 drive the system to the ground level; on record 0 do nothing."""
    space = space or two_level()
    if space.size != 2:
        raise ValueError("Szilard protocol is defined on a two-level space")
    c0 = np.eye(2)
    c1 = np.array([[1.0, 1.0],
                   [0.0, 0.0]])
    return FeedbackProtocol("szilard", space, (c0, c1))


def state_flip_protocol(space: StateSpace | None = None) -> FeedbackProtocol:
    """Conditional pi-flip: record 1 swaps the levels, record 0 does nothing."""
    space = space or two_level()
    if space.size != 2:
        raise ValueError("state-flip protocol is defined on a two-level space")
    c0 = np.eye(2)
    c1 = np.array([[0.0, 1.0],
                   [1.0, 0.0]])
    return FeedbackProtocol(
        "flip", space, (c0, c1), reconstructed=True,
        notes="conditional pi-flip on record 1 (reconstruction)")


@dataclass(frozen=True)
class IonCompositeModel:
    """Red-sideband battery coupling of the trapped-ion realization.

    ``pulse_area`` is measured so that the n=0 <-> n=1 transfer is complete
    at ``pi``.
    """
    lamb_dicke: float = 0.11
    nbar: float = 0.14
    n_max: int = 30
    pulse_area: float = math.pi

    def __post_init__(self):
        if not self.lamb_dicke > 0:
            raise ValueError("lamb_dicke must be positive")
        if not self.nbar >= 0:
            raise ValueError("nbar must be non-negative")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise ValueError("n_max must be an integer >= 2")
        if not self.pulse_area >= 0:
            raise ValueError("pulse_area must be non-negative")

    def pulse_duration(self, rabi: float) -> float:
        """tau_r = pulse_area / (lamb_dicke * Omega_1)."""
        return self.pulse_area / (self.lamb_dicke * rabi)


def thermal_phonons(nbar: float, n_max: int) -> np.ndarray:
    """Geometric (thermal) Fock populations truncated at ``n_max`` and renormalised."""
    if nbar == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    r = nbar / (1.0 + nbar)
    tail = r ** (n_max + 1)
    if tail >= TAIL_TOL:
        raise TruncationError(
            f"n_max={n_max} leaves thermal tail {tail:.3g} for nbar={nbar}")
    p = (1.0 - r) * r ** np.arange(n_max + 1)
    return p / math.fsum(p)


def sideband_transfer_prob(n: int, model: IonCompositeModel | None = None) -> float:
    """Population moved between |up, n-1> and |down, n> by the red sideband.

    The coupling scales as sqrt(n), so a pulse of area A transfers
    sin^2(A sqrt(n) / 2).
    """
    if n < 1:
        raise ValueError("n must be >= 1: |up, -1> does not exist")
    area = math.pi if model is None else model.pulse_area
    return math.sin(area * math.sqrt(n) / 2.0) ** 2


def ion_composite_protocol(model: IonCompositeModel | None = None,
                           ctx: ThermalContext | None = None) -> FeedbackProtocol:
    """Szilard engine whose work goes into the ion's motional mode.

    Record 1 applies the red-sideband map on (qubit, phonon) states; record 0
    leaves everything alone. ``channel`` holds the qubit-marginal channel
    obtained by averaging over the initial thermal phonon distribution.
    """
    model = model or IonCompositeModel()
    gap = 1.0 if ctx is None else ctx.energy_gap
    sys_space = two_level(gap)
    prior = thermal_phonons(model.nbar, model.n_max)
    levels = model.n_max + 1
    labels, energies = [], []
    for label, e in zip(sys_space.labels, sys_space.energies):
        for n in range(levels):
            labels.append((label, n))
            energies.append(e)
    comp = StateSpace(tuple(labels), tuple(energies))
    d, u = sys_space.index(DOWN), sys_space.index(UP)

    c0 = np.eye(comp.size)
    c1 = np.eye(comp.size)
    for n in range(1, levels):
        p = sideband_transfer_prob(n, model)
        hi, lo = u * levels + (n - 1), d * levels + n
        c1[hi, hi] = c1[lo, lo] = 1.0 - p
        c1[lo, hi] = c1[hi, lo] = p
    # |up, n_max> would pair with |down, n_max + 1>, which is truncated away
    battery = Battery(comp, prior, (_check_channel(c0, comp.size),
                                    _check_channel(c1, comp.size)))

    marg = []
    for cy in battery.channel:
        m = np.zeros((2, 2))
        blocks = cy.reshape(2, levels, 2, levels)
        for xc in range(2):
            for x0 in range(2):
                m[xc, x0] = math.fsum((blocks[xc, :, x0, :] @ prior).tolist())
        marg.append(m / m.sum(axis=0, keepdims=True))
    return FeedbackProtocol(
        "ion", sys_space, tuple(marg), battery=battery,
        notes=f"red-sideband battery, nbar={model.nbar}, n_max={model.n_max}")


PROTOCOLS = ("szilard", "flip", "ion", "identity")


def make_protocol(name: str, ctx: ThermalContext | None = None,
                  ion: IonCompositeModel | None = None) -> FeedbackProtocol:
    gap = 1.0 if ctx is None else ctx.energy_gap
    if name == "szilard":
        return szilard_protocol(two_level(gap))
    if name == "flip":
        return state_flip_protocol(two_level(gap))
    if name == "identity":
        return identity_protocol(two_level(gap))
    if name == "ion":
        return ion_composite_protocol(ion, ctx)
    raise ValueError(f"unknown protocol {name!r}; choose from {PROTOCOLS}")


@dataclass(frozen=True)
class ControlledDistributions:
    """Post-control statistics over the output space.

    ``conditional`` is q(x_c | y) indexed ``[x_c, y]``; ``marginal`` is
    p(x_c) = sum_y p(y) q(x_c | y). ``resolution`` says whether x_c is the
    bare qubit state or a composite (qubit, phonon) state.
    """
    space: StateSpace
    conditional: np.ndarray = field(repr=False)
    marginal: np.ndarray = field(repr=False)
    record: np.ndarray = field(repr=False)
    resolution: str = SYSTEM

    @property
    def support_flags(self) -> np.ndarray:
        return self.conditional > 0

    def q(self, xc, y: int) -> float:
        return float(self.conditional[self.space.index(xc), y])

    def p(self, xc) -> float:
        return float(self.marginal[self.space.index(xc)])


def apply_control(protocol: FeedbackProtocol, table: MeasurementOutcomeTable,
                  resolution: str = SYSTEM) -> ControlledDistributions:
    if resolution not in RESOLUTIONS:
        raise ValueError(f"resolution must be one of {RESOLUTIONS}")
    if table.space.size != protocol.space.size:
        raise DimensionMismatchError(
            f"protocol acts on {protocol.space.size} states, "
            f"table has {table.space.size}")
    post = table.conditional_state
    py = table.marginal_record

    if resolution == SYSTEM:
        space = protocol.space
        q = np.column_stack([protocol.channel[y] @ post[:, y] for y in RECORDS])
    else:
        bat = protocol.battery
        if bat is None:
            raise ValueError(f"protocol {protocol.name!r} has no composite extension")
        space = bat.space
        cols = []
        for y in RECORDS:
            start = np.kron(post[:, y], bat.prior)
            cols.append(bat.channel[y] @ start)
        q = np.column_stack(cols)

    for y in RECORDS:
        if py[y] == 0:
            q[:, y] = 0.0
    marginal = np.array([math.fsum((py * q[k, :]).tolist())
                         for k in range(space.size)])
    for a in (q, marginal, py):
        a.setflags(write=False)
    return ControlledDistributions(space, q, marginal, py, resolution)


def reference_distribution(protocol: FeedbackProtocol, p_eq: Distribution,
                           resolution: str = SYSTEM) -> Distribution:
    """Equilibrium reference on the output space of ``apply_control``."""
    if resolution == SYSTEM:
        return p_eq
    bat = protocol.battery
    if bat is None:
        raise ValueError(f"protocol {protocol.name!r} has no composite extension")
    return Distribution(bat.space, np.kron(p_eq.probabilities, bat.prior))
