"""``demonsim`` command line: parameter sweeps and single-point diagnostics.

Configuration comes from an optional flat ``key = value`` file (keys carry
``protocol.``, ``sweep.``, ``engine.`` or ``output.`` prefixes) and from
flags, which override the file. Both go through the same parser.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from . import __version__
from .accounting import COARSE_VARIANTS, CYCLE_IMPROPER, ensemble_report
from .errors import ConfigError, DemonSimError
from .measurement import ZETA_MEASURED, ErrorModel, error_from_pulse, measure
from .montecarlo import MODES, estimate, ft_estimate, sample_trajectories
from .protocols import (PROTOCOLS, RESOLUTIONS, SYSTEM, IonCompositeModel,
                        make_protocol)
from .thermo import beta_from_prep_angle, equilibrium_distribution, ThermalContext

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

ENGINES = ("exact", "montecarlo", "both")
FORMATS = ("csv", "json")

PARAM_COLUMNS = ("theta_c", "beta", "temperature", "epsilon")
EXACT_COLUMNS = (
    "w_out", "w_ext", "delta_f", "delta_f_coarse",
    "mean_sigma_cond", "mean_sigma_uncond", "mean_sigma_info",
    "ft_cond", "ft_uncond", "ft_info",
    "support_deficit_cond", "support_deficit_info",
    "eta_out", "eta_ext", "eta_max", "coarse_violated", "coarse_margin",
)
MC_FIELDS = ("w_out", "mean_sigma_cond", "mean_sigma_uncond", "mean_sigma_info",
             "ft_cond", "ft_uncond", "ft_info")
MC_COLUMNS = tuple(c for f in MC_FIELDS for c in (f + "_mc", f + "_stderr"))


@dataclass(frozen=True)
class SweepConfig:
    protocol: str
    kappa: float = 0.88
    lamb_dicke: float = 0.11
    nbar: float = 0.14
    n_max: int = 30
    pulse_area: float = math.pi
    theta_c: tuple = (math.pi / 6, math.pi / 3, math.pi / 2)
    epsilon: tuple | None = None
    zeta: float | None = None
    pulse_theta: tuple | None = None
    engine: str = "exact"
    n_samples: int = 100_000
    seed: int = 0
    coarse_variant: str = CYCLE_IMPROPER
    resolution: str = SYSTEM
    mc_mode: str = "model"
    workers: int = 1
    output: str | None = None
    format: str = "csv"
    timestamp: bool = True

    @property
    def epsilons(self) -> tuple:
        """The error axis as probabilities, derived from pulse areas if needed."""
        if self.pulse_theta is not None:
            zeta = ZETA_MEASURED if self.zeta is None else self.zeta
            return tuple(error_from_pulse(ErrorModel(zeta, th))
                         for th in self.pulse_theta)
        return self.epsilon

    @property
    def ion_model(self) -> IonCompositeModel:
        return IonCompositeModel(self.lamb_dicke, self.nbar, self.n_max,
                                 self.pulse_area)

    def points(self):
        return [(th, eps) for th in self.theta_c for eps in self.epsilons]


# config key -> (field name, kind)
KEYS = {
    "protocol.name": ("protocol", "choice:" + ",".join(PROTOCOLS)),
    "protocol.kappa": ("kappa", "float"),
    "protocol.lamb_dicke": ("lamb_dicke", "float"),
    "protocol.nbar": ("nbar", "float"),
    "protocol.n_max": ("n_max", "int"),
    "protocol.pulse_area": ("pulse_area", "float"),
    "sweep.theta_c": ("theta_c", "grid"),
    "sweep.epsilon": ("epsilon", "grid"),
    "sweep.zeta": ("zeta", "float"),
    "sweep.pulse_theta": ("pulse_theta", "grid"),
    "engine.kind": ("engine", "choice:" + ",".join(ENGINES)),
    "engine.n_samples": ("n_samples", "int"),
    "engine.seed": ("seed", "int"),
    "engine.coarse_variant": ("coarse_variant", "choice:" + ",".join(COARSE_VARIANTS)),
    "engine.resolution": ("resolution", "choice:" + ",".join(RESOLUTIONS)),
    "engine.mc_mode": ("mc_mode", "choice:" + ",".join(MODES)),
    "engine.workers": ("workers", "int"),
    "output.path": ("output", "str"),
    "output.format": ("format", "choice:" + ",".join(FORMATS)),
    "output.timestamp": ("timestamp", "bool"),
}

# keys that change how a sweep runs but not what it computes
EXECUTION_KEYS = ("engine.workers", "output.path")

_PI_RE = re.compile(
    r"^\s*(?:(?P<num>[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)\s*\*?\s*)?pi"
    r"(?:\s*/\s*(?P<den>\d*\.?\d+(?:[eE][-+]?\d+)?))?\s*$")


def parse_number(text: str) -> float:
    """Float literal, or a multiple/fraction of pi such as ``pi/3`` or ``2pi/3``."""
    m = _PI_RE.match(text)
    if m:
        num = float(m.group("num")) if m.group("num") else 1.0
        den = float(m.group("den")) if m.group("den") else 1.0
        return num * math.pi / den
    return float(text)


def parse_grid(text: str) -> tuple:
    """``start:stop:step`` (stop included) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:step")
        start, stop, step = (parse_number(p) for p in parts)
        if step <= 0:
            raise ValueError("step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9))
        if count < 0:
            raise ValueError("empty range")
        return tuple(round(start + i * step, 12) for i in range(count + 1))
    values = tuple(parse_number(p) for p in text.split(",") if p.strip())
    if not values:
        raise ValueError("empty grid")
    return values


def _convert(key: str, kind: str, raw: str):
    try:
        if kind == "float":
            return parse_number(raw)
        if kind == "int":
            return int(raw)
        if kind == "grid":
            return parse_grid(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind.startswith("choice:"):
            choices = kind[len("choice:"):].split(",")
            if raw.strip() not in choices:
                raise ValueError(f"{raw!r} not in {choices}")
            return raw.strip()
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def read_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines into a raw ``{key: str}`` mapping."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        raw[key] = value
    return raw


def parse_config(text: str | None = None, overrides: dict | None = None) -> SweepConfig:
    """Resolve a SweepConfig from file text and flag overrides (both raw strings).

    The error axis is taken as a unit: if the overrides set either
    ``sweep.epsilon`` or ``sweep.pulse_theta``, the file's error axis is ignored.
    """
    raw = read_config_text(text) if text else {}
    overrides = dict(overrides or {})
    for key in overrides:
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
    if {"sweep.epsilon", "sweep.pulse_theta"} & overrides.keys():
        raw.pop("sweep.epsilon", None)
        raw.pop("sweep.pulse_theta", None)
    raw.update(overrides)

    if "protocol.name" not in raw:
        raise ConfigError("protocol.name", "a protocol name is required")
    values = {}
    for key, text_value in raw.items():
        name, kind = KEYS[key]
        values[name] = _convert(key, kind, text_value)
    if "seed" not in values and os.environ.get("DEMONSIM_SEED"):
        values["seed"] = _convert("DEMONSIM_SEED", "int", os.environ["DEMONSIM_SEED"])
    return validate(SweepConfig(**values))


def validate(cfg: SweepConfig) -> SweepConfig:
    if cfg.epsilon is not None and cfg.pulse_theta is not None:
        raise ConfigError("error_axis", "give either an epsilon grid or a "
                          "pulse_theta grid, not both")
    if cfg.epsilon is None and cfg.pulse_theta is None:
        cfg = replace(cfg, epsilon=parse_grid("0:1:0.05"))
    if cfg.epsilon is not None and not all(0.0 <= e <= 1.0 for e in cfg.epsilon):
        raise ConfigError("error_axis", "epsilon entries must lie in [0, 1]")
    if cfg.pulse_theta is not None and not all(t >= 0 for t in cfg.pulse_theta):
        raise ConfigError("error_axis", "pulse_theta entries must be >= 0")
    if cfg.zeta is not None and not cfg.zeta > 0:
        raise ConfigError("sweep.zeta", "zeta must be positive")
    if not cfg.theta_c:
        raise ConfigError("sweep.theta_c", "grid is empty")
    for th in cfg.theta_c:
        if not 0 < th <= math.pi / 2 + 1e-12:
            raise ConfigError("sweep.theta_c",
                              f"{th} outside (0, pi/2] (beta would be negative)")
    if not 0 <= cfg.kappa <= 1:
        raise ConfigError("protocol.kappa", "must lie in [0, 1]")
    if cfg.n_samples < 1:
        raise ConfigError("engine.n_samples", "must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("engine.workers", "must be >= 1")
    if cfg.protocol == "ion":
        try:
            make_protocol("ion", None, cfg.ion_model)
        except ValueError as exc:
            raise ConfigError("protocol.nbar", str(exc)) from None
    elif cfg.resolution != SYSTEM:
        raise ConfigError("engine.resolution",
                          "composite resolution needs the ion protocol")
    return cfg


def serialize_config(cfg: SweepConfig) -> str:
    """Flat text form; ``parse_config(serialize_config(c)) == c``."""
    lines = []
    for key, (name, kind) in KEYS.items():
        value = getattr(cfg, name)
        if value is None:
            continue
        if kind == "grid":
            text = ",".join(repr(float(v)) for v in value)
        elif kind == "bool":
            text = "true" if value else "false"
        elif kind == "float":
            text = repr(float(value))
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        if math.isnan(value):
            return ""
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        # avoid printing "-0"
        return f"{value + 0.0:.12g}"
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def _context(theta_c: float) -> ThermalContext:
    return ThermalContext(beta_from_prep_angle(theta_c))


def evaluate_point(cfg: SweepConfig, theta_c: float, epsilon: float,
                   point_index: int = 0) -> dict:
    """One output row: exact report fields and/or Monte Carlo estimates."""
    ctx = _context(theta_c)
    protocol = make_protocol(cfg.protocol, ctx, cfg.ion_model)
    table = measure(equilibrium_distribution(ctx), epsilon)
    row = {"theta_c": theta_c, "beta": ctx.beta,
           "temperature": ctx.temperature, "epsilon": epsilon}
    if cfg.engine in ("exact", "both"):
        report = ensemble_report(protocol, table, ctx, cfg.kappa,
                                 cfg.coarse_variant, cfg.resolution)
        row.update({c: getattr(report, c) for c in EXACT_COLUMNS})
    if cfg.engine in ("montecarlo", "both"):
        # each sweep point gets its own seed stream, independent of scheduling
        seed = int(cfg.seed) * 1_000_003 + point_index
        batch = sample_trajectories(protocol, table, cfg.n_samples, seed,
                                    cfg.mc_mode, cfg.resolution,
                                    sweep_point={"theta_c": theta_c,
                                                 "epsilon": epsilon})
        ests = {"w_out": estimate(batch, "work"),
                "mean_sigma_cond": estimate(batch, "sigma_cond"),
                "mean_sigma_uncond": estimate(batch, "sigma_uncond"),
                "mean_sigma_info": estimate(batch, "sigma_info")}
        fts = ft_estimate(batch)
        ests.update({"ft_" + k: v for k, v in fts.items()})
        for f in MC_FIELDS:
            row[f + "_mc"] = ests[f].mean
            row[f + "_stderr"] = ests[f].stderr
    return row


def _evaluate_star(args):
    return evaluate_point(*args)


def columns_for(cfg: SweepConfig) -> tuple:
    cols = PARAM_COLUMNS
    if cfg.engine in ("exact", "both"):
        cols += EXACT_COLUMNS
    if cfg.engine in ("montecarlo", "both"):
        cols += MC_COLUMNS
    return cols


def run_sweep(cfg: SweepConfig) -> list:
    """Evaluate every (theta_c, epsilon) point; rows come back in grid order."""
    jobs = [(cfg, th, eps, i) for i, (th, eps) in enumerate(cfg.points())]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_evaluate_star, jobs))
    return [_evaluate_star(j) for j in jobs]


def metadata_lines(cfg: SweepConfig) -> list:
    protocol = make_protocol(cfg.protocol, None, cfg.ion_model)
    lines = [f"demonsim {__version__} sweep"]
    if cfg.timestamp:
        lines.append("generated: " + datetime.now(timezone.utc).isoformat(
            timespec="seconds"))
    lines += [
        f"protocol: {protocol.name}; reconstructed={str(protocol.reconstructed).lower()}"
        + (f"; {protocol.notes}" if protocol.notes else ""),
        "units: k_B = E = 1; entropies in nats; energies in units of E",
        "convention: T*<sigma_cond> = delta_f - w_out; delta_f = T*<dS_cond>, "
        "dS_cond = ln q(x_c|y) - ln p_eq(x0)",
        f"entropy resolution: {cfg.resolution}; coarse variant: {cfg.coarse_variant}",
        "config: " + "; ".join(
            line for line in serialize_config(cfg).strip().splitlines()
            if line.split(" = ")[0] not in EXECUTION_KEYS),
    ]
    return lines


def render(cfg: SweepConfig, rows: list) -> str:
    cols = columns_for(cfg)
    buf = io.StringIO()
    if cfg.format == "json":
        for row in rows:
            buf.write(json.dumps({c: _json_value(row[c]) for c in cols}) + "\n")
        return buf.getvalue()
    for line in metadata_lines(cfg):
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def _emit(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


FLAG_KEYS = {
    "protocol": "protocol.name", "kappa": "protocol.kappa",
    "lamb_dicke": "protocol.lamb_dicke", "nbar": "protocol.nbar",
    "n_max": "protocol.n_max", "pulse_area": "protocol.pulse_area",
    "theta_c": "sweep.theta_c", "epsilon": "sweep.epsilon",
    "zeta": "sweep.zeta", "pulse_theta": "sweep.pulse_theta",
    "engine": "engine.kind", "n_samples": "engine.n_samples",
    "seed": "engine.seed", "coarse_variant": "engine.coarse_variant",
    "resolution": "engine.resolution", "mc_mode": "engine.mc_mode",
    "workers": "engine.workers", "output": "output.path",
    "format": "output.format",
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--protocol", help=f"one of {', '.join(PROTOCOLS)} (required)")
    p.add_argument("--kappa", help="battery storage efficiency (default 0.88)")
    p.add_argument("--lamb-dicke", help="Lamb-Dicke parameter (default 0.11)")
    p.add_argument("--nbar", help="initial mean phonon number (default 0.14)")
    p.add_argument("--n-max", help="Fock cutoff (default 30)")
    p.add_argument("--pulse-area", help="red-sideband pulse area (default pi)")
    p.add_argument("--theta-c", help="preparation angles, list or start:stop:step; "
                   "'pi/3' style accepted (default pi/6,pi/3,pi/2)")
    p.add_argument("--epsilon", help="error-probability grid (default 0:1:0.05)")
    p.add_argument("--zeta", help=f"error decay constant (default {ZETA_MEASURED})")
    p.add_argument("--pulse-theta", help="measurement pulse-area grid; "
                   "epsilon = 1 - exp(-zeta*theta)")
    p.add_argument("--engine", help="exact, montecarlo or both (default exact)")
    p.add_argument("--n-samples", help="trajectories per point (default 100000)")
    p.add_argument("--seed", help="root seed (default $DEMONSIM_SEED or 0)")
    p.add_argument("--coarse-variant",
                   help=f"{', '.join(COARSE_VARIANTS)} (default cycle-improper)")
    p.add_argument("--resolution", help="system or composite (default system)")
    p.add_argument("--mc-mode", help="model or empirical (default model)")
    p.add_argument("--workers", help="worker processes (default 1)")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.add_argument("--format", help="csv or json (default csv)")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the timestamp header line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demonsim",
        description="Measurement-feedback thermodynamics: entropy productions, "
                    "fluctuation theorems and work bounds.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("sweep", "evaluate a (theta_c, epsilon) grid"),
            ("verify-ft", "fluctuation-theorem averages at one point"),
            ("report", "full work report at one point"),
            ("sample", "dump sampled trajectories at one point")]:
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def config_from_args(args: argparse.Namespace) -> SweepConfig:
    text = None
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
    overrides = {key: getattr(args, attr) for attr, key in FLAG_KEYS.items()
                 if getattr(args, attr) is not None}
    if args.no_timestamp:
        overrides["output.timestamp"] = "false"
    return parse_config(text, overrides)


def _single_point(cfg: SweepConfig):
    pts = cfg.points()
    if len(pts) != 1:
        raise ConfigError("sweep", f"this command needs exactly one point, got {len(pts)}")
    return pts[0]


def cmd_verify_ft(cfg: SweepConfig) -> str:
    from .engine import SIGMAS, enumerate_outcomes, ft_exponential_average
    theta_c, eps = _single_point(cfg)
    ctx = _context(theta_c)
    protocol = make_protocol(cfg.protocol, ctx, cfg.ion_model)
    table = measure(equilibrium_distribution(ctx), eps)
    lines = [f"theta_c={_fmt(theta_c)} epsilon={_fmt(eps)} protocol={protocol.name}"]
    mc = None
    if cfg.engine in ("montecarlo", "both"):
        batch = sample_trajectories(protocol, table, cfg.n_samples, cfg.seed,
                                    cfg.mc_mode, cfg.resolution)
        mc = ft_estimate(batch)
    if cfg.engine in ("exact", "both"):
        outcomes = enumerate_outcomes(protocol, table, cfg.resolution)
        for which in SIGMAS:
            r = ft_exponential_average(outcomes, which)
            line = (f"sigma_{which}: <exp(-sigma)> = {_fmt(r.value)} "
                    f"support_deficit = {_fmt(r.support_deficit)}")
            if mc:
                line += f" mc = {_fmt(mc[which].mean)} +/- {_fmt(mc[which].stderr)}"
            lines.append(line)
    else:
        for which in SIGMAS:
            lines.append(f"sigma_{which}: mc = {_fmt(mc[which].mean)} "
                         f"+/- {_fmt(mc[which].stderr)}")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: SweepConfig) -> str:
    theta_c, eps = _single_point(cfg)
    ctx = _context(theta_c)
    protocol = make_protocol(cfg.protocol, ctx, cfg.ion_model)
    table = measure(equilibrium_distribution(ctx), eps)
    report = ensemble_report(protocol, table, ctx, cfg.kappa,
                             cfg.coarse_variant, cfg.resolution)
    d = {"theta_c": theta_c, **report.as_dict()}
    if cfg.format == "json":
        return json.dumps({k: _json_value(v) for k, v in d.items()}, indent=2) + "\n"
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in d.items())


SAMPLE_COLUMNS = ("x0", "y", "xc", "nc", "xt", "work", "heat",
                  "sigma_cond", "sigma_uncond", "sigma_info")


def cmd_sample(cfg: SweepConfig) -> str:
    theta_c, eps = _single_point(cfg)
    ctx = _context(theta_c)
    protocol = make_protocol(cfg.protocol, ctx, cfg.ion_model)
    table = measure(equilibrium_distribution(ctx), eps)
    batch = sample_trajectories(protocol, table, cfg.n_samples, cfg.seed,
                                cfg.mc_mode, cfg.resolution,
                                sweep_point={"theta_c": theta_c, "epsilon": eps})
    buf = io.StringIO()
    buf.write(f"# protocol={batch.protocol_id} seed={batch.seed} n={batch.n} "
              f"mode={batch.mode} theta_c={_fmt(theta_c)} epsilon={_fmt(eps)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SAMPLE_COLUMNS)
    for i in range(batch.n):
        nc = "" if batch.nc is None else int(batch.nc[i])
        writer.writerow([int(batch.x0[i]), int(batch.y[i]), int(batch.xc[i]), nc,
                         int(batch.xt[i]), _fmt(float(batch.work[i])),
                         _fmt(float(batch.heat[i])),
                         _fmt(float(batch.sigma_cond[i])),
                         _fmt(float(batch.sigma_uncond[i])),
                         _fmt(float(batch.sigma_info[i]))])
    return buf.getvalue()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"demonsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "sweep":
            text = render(cfg, run_sweep(cfg))
        elif args.command == "verify-ft":
            text = cmd_verify_ft(cfg)
        elif args.command == "report":
            text = cmd_report(cfg)
        else:
            text = cmd_sample(cfg)
        _emit(text, cfg.output)
    except ConfigError as exc:
        print(f"demonsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DemonSimError, OSError, ValueError) as exc:
        print(f"demonsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
