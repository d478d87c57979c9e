"""Seeded trajectory sampling of the measure -> control -> thermalise cycle.

Trajectories are generated in fixed-size chunks. Chunk ``c`` draws from its
own Philox stream keyed by ``SeedSequence(seed, spawn_key=(c,))``, so a batch
depends only on (seed, n, parameters) and not on how many workers ran it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .measurement import RECORDS, MeasurementOutcomeTable
from .protocols import (SYSTEM, FeedbackProtocol, apply_control,
                        reference_distribution)
from .thermo import Distribution

CHUNK_SIZE = 8192
MODES = ("model", "empirical")


class Estimate(NamedTuple):
    mean: float
    stderr: float
    n: int

    @property
    def single_sample(self) -> bool:
        # stderr is reported as 0 but carries no information
        return self.n == 1

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr


@dataclass(frozen=True)
class TrajectoryBatch:
    """Columnar store of sampled cycles.

    Integer columns index the system space (``x0``, ``xc``, ``xt``); ``out``
    indexes the space the entropies were evaluated on and ``nc`` the final
    phonon number when the protocol has a battery.
    """
    x0: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    xc: np.ndarray = field(repr=False)
    xt: np.ndarray = field(repr=False)
    out: np.ndarray = field(repr=False)
    nc: np.ndarray | None = field(repr=False)
    work: np.ndarray = field(repr=False)
    heat: np.ndarray = field(repr=False)
    sigma_cond: np.ndarray = field(repr=False)
    sigma_uncond: np.ndarray = field(repr=False)
    sigma_info: np.ndarray = field(repr=False)
    n: int
    seed: int
    protocol_id: str
    sweep_point: dict
    mode: str = "model"
    resolution: str = SYSTEM

    def records(self):
        """Yield (x0, y, xc, w, (sigma_cond, sigma_uncond, sigma_info)) per trajectory."""
        for i in range(self.n):
            yield (int(self.x0[i]), int(self.y[i]), int(self.xc[i]),
                   float(self.work[i]),
                   (float(self.sigma_cond[i]), float(self.sigma_uncond[i]),
                    float(self.sigma_info[i])))

    def __len__(self):
        return self.n


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(chunk,))
    return np.random.Generator(np.random.Philox(ss))


def _draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def _draw_columns(cum: np.ndarray, cols: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sample a row index from column ``cols[i]`` of a column-cumulative matrix."""
    sel = cum[:, cols].T
    idx = (u[:, None] >= sel).sum(axis=1)
    return np.minimum(idx, cum.shape[0] - 1)


class _Sampler:
    def __init__(self, protocol: FeedbackProtocol, table: MeasurementOutcomeTable,
                 resolution: str):
        self.protocol = protocol
        self.battery = protocol.battery
        self.resolution = resolution
        self.p0_cdf = np.cumsum(table.marginal_state)
        self.like_cdf = np.cumsum(table.conditional_record, axis=1)
        if self.battery is None:
            chans = protocol.channel
        else:
            chans = self.battery.channel
            self.prior_cdf = np.cumsum(self.battery.prior)
        self.cum = [np.cumsum(c, axis=0) for c in chans]

    def chunk(self, seed: int, c: int, m: int):
        rng = _chunk_rng(seed, c)
        u = rng.random((5, m))
        x0 = _draw(self.p0_cdf, u[0])
        y = (u[1] >= self.like_cdf[x0, 0]).astype(np.int64)
        if self.battery is None:
            s0 = x0
        else:
            n0 = _draw(self.prior_cdf, u[2])
            s0 = x0 * self.battery.n_levels + n0
        s_c = np.empty(m, dtype=np.int64)
        for rec in RECORDS:
            mask = y == rec
            s_c[mask] = _draw_columns(self.cum[rec], s0[mask], u[3][mask])
        xt = _draw(self.p0_cdf, u[4])
        return x0, y, s_c, xt


def sample_trajectories(protocol: FeedbackProtocol, table: MeasurementOutcomeTable,
                        n: int, seed: int, mode: str = "model",
                        resolution: str = SYSTEM, workers: int = 1,
                        sweep_point: dict | None = None) -> TrajectoryBatch:
    """Draw ``n`` independent cycles x0 -> y -> x_c -> x_t.

    In ``model`` mode the entropy productions use the exact q(x_c|y) and
    p(x_c); in ``empirical`` mode they are recomputed from the batch's own
    frequencies, as a fully data-driven analysis would.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    sampler = _Sampler(protocol, table, resolution)
    sizes = [min(CHUNK_SIZE, n - start) for start in range(0, n, CHUNK_SIZE)]

    def run(c):
        return sampler.chunk(seed, c, sizes[c])

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(c) for c in range(len(sizes))]
    x0, y, s_c, xt = (np.concatenate(col) for col in zip(*parts))

    bat = protocol.battery
    if bat is None:
        xc, nc = s_c, None
    else:
        xc, nc = np.divmod(s_c, bat.n_levels)
    out = xc if resolution == SYSTEM else s_c

    p_eq = Distribution(table.space, table.marginal_state)
    ref = reference_distribution(protocol, p_eq, resolution).probabilities
    if mode == "model":
        cd = apply_control(protocol, table, resolution)
        q, marg = cd.conditional, cd.marginal
    else:
        k = len(ref)
        counts = np.zeros((k, len(RECORDS)))
        np.add.at(counts, (out, y), 1.0)
        per_record = counts.sum(axis=0)
        q = np.divide(counts, per_record, out=np.zeros_like(counts),
                      where=per_record > 0)
        marg = counts.sum(axis=1) / n

    with np.errstate(divide="ignore"):
        lq = np.log(q[out, y])
        lp = np.log(marg[out])
        lref = np.log(ref[out])
    sigma_cond = lq - lref
    sigma_uncond = lp - lref
    energies = np.asarray(table.space.energies)
    return TrajectoryBatch(
        x0=x0, y=y, xc=xc, xt=xt, out=out, nc=nc,
        work=energies[x0] - energies[xc], heat=energies[xt] - energies[xc],
        sigma_cond=sigma_cond, sigma_uncond=sigma_uncond,
        sigma_info=sigma_cond - sigma_uncond,
        n=n, seed=seed, protocol_id=protocol.name,
        sweep_point=dict(sweep_point or {}), mode=mode, resolution=resolution)


def estimate(batch: TrajectoryBatch,
             observable: str | Callable[[TrajectoryBatch], np.ndarray]) -> Estimate:
    """Sample mean and standard error of a per-trajectory observable.

    ``observable`` is a column name of the batch or a function of the batch
    returning one value per trajectory.
    """
    if batch.n < 1:
        raise ValueError("empty batch")
    vals = getattr(batch, observable) if isinstance(observable, str) \
        else observable(batch)
    vals = np.asarray(vals, dtype=float)
    n = len(vals)
    mean = math.fsum(vals.tolist()) / n
    if n == 1:
        return Estimate(mean, 0.0, 1)
    dev = vals - mean
    var = math.fsum((dev * dev).tolist()) / (n - 1)
    return Estimate(mean, math.sqrt(var / n), n)


def ft_estimate(batch: TrajectoryBatch) -> dict:
    """Estimates of <exp(-sigma)> for the three entropy productions."""
    return {
        "cond": estimate(batch, lambda b: np.exp(-b.sigma_cond)),
        "uncond": estimate(batch, lambda b: np.exp(-b.sigma_uncond)),
        "info": estimate(batch, lambda b: np.exp(-b.sigma_info)),
    }
