"""Ensemble thermodynamics of one measurement-feedback cycle.

Energies are in units of the gap and entropies in nats. At infinite
temperature (beta = 0) the free-energy-like quantities T * <Delta S> are
infinite, so bound checks and efficacies are evaluated in their entropic
form (everything multiplied by beta), which is equivalent for beta > 0 and
stays finite at beta = 0.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

from .engine import (OutcomeSet, enumerate_outcomes, exact_expectation,
                     ft_exponential_average)
from .measurement import RECORDS, MeasurementOutcomeTable
from .protocols import SYSTEM, FeedbackProtocol
from .thermo import ThermalContext, mutual_information

IDENTITY_TOL = 1e-10
SIGN_TOL = 1e-12

MARGINAL = "marginal"
CYCLE_IMPROPER = "cycle-improper"
PARTIAL_AVERAGE = "partial-average"
COARSE_VARIANTS = (MARGINAL, CYCLE_IMPROPER, PARTIAL_AVERAGE)


def scale_by_temperature(ctx: ThermalContext, entropy: float) -> float:
    """T * entropy, with T = inf handled without producing NaN for zero entropy."""
    if not ctx.infinite_temperature:
        return ctx.temperature * entropy
    if entropy == 0 or abs(entropy) < SIGN_TOL:
        return 0.0
    return math.copysign(math.inf, entropy)


class CoarseCheck(NamedTuple):
    variant: str
    delta_f: float
    w_out: float
    violated: bool
    margin: float
    # True when some realised trajectory has -inf coarse entropy change
    absolute: bool = False


class Efficacies(NamedTuple):
    eta_out: float
    eta_ext: float
    eta_max: float

    @property
    def defined(self) -> bool:
        return not math.isnan(self.eta_out)

    def ordered(self, tol: float = 1e-12) -> bool:
        """eta_ext <= eta_out <= eta_max <= 1."""
        if not self.defined:
            return False
        return (self.eta_ext <= self.eta_out + tol
                and self.eta_out <= self.eta_max + tol
                and self.eta_max <= 1.0 + tol)


@dataclass(frozen=True)
class WorkReport:
    protocol: str
    beta: float
    temperature: float
    epsilon: float
    kappa: float
    w_out: float
    w_ext: float
    delta_f: float
    delta_f_coarse: float
    coarse_variant: str
    coarse_violated: bool
    coarse_margin: float
    mean_sigma_cond: float
    mean_sigma_uncond: float
    mean_sigma_info: float
    mean_delta_s_cond: float
    mean_delta_s_coarse: float
    mean_heat: float
    mutual_information: float
    ft_cond: float
    ft_uncond: float
    ft_info: float
    support_deficit_cond: float
    support_deficit_uncond: float
    support_deficit_info: float
    bound_tight: float
    bounds_hold: bool
    residual_cond: float
    residual_uncond: float
    residual_heat: float
    eta_out: float
    eta_ext: float
    eta_max: float
    delta_nbar: float

    def as_dict(self) -> dict:
        return asdict(self)


def efficacies(report: WorkReport) -> Efficacies:
    """(eta_out, eta_ext, eta_max), all NaN when Delta F is not positive.

    eta_out = W_out / Delta F, eta_ext = W_ext / Delta F and
    eta_max = 1 - T <sigma_I> / Delta F, evaluated as entropy ratios.
    """
    ds = report.mean_delta_s_cond
    if not ds > SIGN_TOL:
        nan = math.nan
        return Efficacies(nan, nan, nan)
    return Efficacies(report.beta * report.w_out / ds,
                      report.beta * report.w_ext / ds,
                      1.0 - report.mean_sigma_info / ds)


def _partial_average_entropy(outcomes: OutcomeSet) -> tuple[float, bool]:
    """<Delta S> with the record averaged out at fixed (x0, x_c).

    Each trajectory gets sum_y p(y) [ln q(x_c|y) - ln p_eq(x0)]; a record that
    can never produce x_c contributes ln 0 = -inf.
    """
    cd = outcomes.controlled_system
    py = cd.record
    p0 = outcomes.p_eq.probabilities
    pair = {}
    for a in outcomes.realized:
        pair[(a.x0, a.xc)] = pair.get((a.x0, a.xc), 0.0) + a.probability
    terms = []
    for (x0, xc), w in sorted(pair.items()):
        vals = []
        for y in RECORDS:
            if py[y] == 0:
                continue
            q = cd.conditional[xc, y]
            if q == 0:
                return -math.inf, True
            vals.append(py[y] * (math.log(q) - math.log(p0[x0])))
        terms.append(w * math.fsum(vals))
    return math.fsum(terms), False


def coarse_grained_check(variant: str, outcomes: OutcomeSet,
                         ctx: ThermalContext) -> CoarseCheck:
    """Coarse-grained second-law check W_out <= Delta F_variant.

    ``marginal`` uses Delta S_X built from p(x_c); its margin is T <sigma_X>
    and it is never violated. ``cycle-improper`` closes the cycle through
    thermalisation, so Delta F = 0 and the improper entropy production is
    -beta W_out (the reported margin). ``partial-average`` averages the
    conditional entropy change over p(y) at fixed system trajectory; margin
    is Delta F_pa - W_out and is -inf when a realised trajectory is
    impossible under some record.
    """
    w_out = exact_expectation(outcomes, lambda a: a.ledger.work)
    if variant == MARGINAL:
        ds = exact_expectation(outcomes, lambda a: a.ledger.delta_s_coarse)
        sx = exact_expectation(outcomes, lambda a: a.ledger.sigma_uncond)
        margin = scale_by_temperature(ctx, sx)
        return CoarseCheck(variant, scale_by_temperature(ctx, ds), w_out,
                           margin < -IDENTITY_TOL, margin)
    if variant == CYCLE_IMPROPER:
        margin = -ctx.beta * w_out
        return CoarseCheck(variant, 0.0, w_out, margin < -SIGN_TOL, margin)
    if variant == PARTIAL_AVERAGE:
        ds, absolute = _partial_average_entropy(outcomes)
        if absolute:
            return CoarseCheck(variant, -math.inf, w_out, True, -math.inf, True)
        df = scale_by_temperature(ctx, ds)
        margin = df - w_out
        return CoarseCheck(variant, df, w_out, margin < -IDENTITY_TOL, margin)
    raise ValueError(f"unknown coarse-grained variant {variant!r}; "
                     f"choose from {COARSE_VARIANTS}")


def ensemble_report(protocol: FeedbackProtocol, table: MeasurementOutcomeTable,
                    ctx: ThermalContext, kappa: float = 1.0,
                    coarse_variant: str = CYCLE_IMPROPER,
                    resolution: str = SYSTEM) -> WorkReport:
    """Exact ensemble averages, bounds and efficacies for one sweep point.

    ``resolution`` only affects the fluctuation-theorem fields; the work and
    free-energy accounting is always done on the qubit marginal.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    outcomes = enumerate_outcomes(protocol, table, SYSTEM)
    ft_outcomes = outcomes if resolution == SYSTEM else \
        enumerate_outcomes(protocol, table, resolution)

    def mean(attr):
        return exact_expectation(outcomes, lambda a: getattr(a.ledger, attr))

    w_out = mean("work")
    s_cond, s_unc, s_info = (mean("sigma_cond"), mean("sigma_uncond"),
                             mean("sigma_info"))
    ds_cond, ds_coarse = mean("delta_s_cond"), mean("delta_s_coarse")
    heat = mean("heat")
    beta = ctx.beta
    delta_f = scale_by_temperature(ctx, ds_cond)

    if ctx.infinite_temperature:
        residual_cond = s_cond - ds_cond
        residual_unc = s_unc - ds_coarse
        bound_tight = scale_by_temperature(ctx, ds_cond - s_info)
        bounds_hold = (0.0 <= ds_cond - s_info + IDENTITY_TOL
                       and s_info >= -IDENTITY_TOL)
    else:
        t = ctx.temperature
        residual_cond = t * s_cond - (delta_f - w_out)
        residual_unc = t * s_unc - (t * ds_coarse - w_out)
        bound_tight = delta_f - t * s_info
        bounds_hold = (w_out <= bound_tight + IDENTITY_TOL
                       and bound_tight <= delta_f + IDENTITY_TOL)

    coarse = coarse_grained_check(coarse_variant, outcomes, ctx)
    fts = {w: ft_exponential_average(ft_outcomes, w)
           for w in ("cond", "uncond", "info")}

    delta_nbar = math.nan
    if protocol.battery is not None:
        delta_nbar = (exact_expectation(outcomes, lambda a: float(a.nc))
                      - protocol.battery.mean_phonons)

    report = WorkReport(
        protocol=protocol.name, beta=beta, temperature=ctx.temperature,
        epsilon=table.epsilon[0], kappa=kappa,
        w_out=w_out, w_ext=kappa * w_out,
        delta_f=delta_f, delta_f_coarse=coarse.delta_f,
        coarse_variant=coarse_variant, coarse_violated=coarse.violated,
        coarse_margin=coarse.margin,
        mean_sigma_cond=s_cond, mean_sigma_uncond=s_unc, mean_sigma_info=s_info,
        mean_delta_s_cond=ds_cond, mean_delta_s_coarse=ds_coarse,
        mean_heat=heat, mutual_information=mutual_information(table),
        ft_cond=fts["cond"].value, ft_uncond=fts["uncond"].value,
        ft_info=fts["info"].value,
        support_deficit_cond=fts["cond"].support_deficit,
        support_deficit_uncond=fts["uncond"].support_deficit,
        support_deficit_info=fts["info"].support_deficit,
        bound_tight=bound_tight, bounds_hold=bounds_hold,
        residual_cond=residual_cond, residual_uncond=residual_unc,
        residual_heat=w_out - heat,
        eta_out=math.nan, eta_ext=math.nan, eta_max=math.nan,
        delta_nbar=delta_nbar)
    eff = efficacies(report)
    return replace(report, eta_out=eff.eta_out, eta_ext=eff.eta_ext,
                    eta_max=eff.eta_max)

