"""Flat ``section.key = value`` experiment configuration."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .chain import ChainParams, s_order
from .dynamics import SCHEMES, IntegratorConfig, omega_max
from .gibbs import SamplerConfig

KINDS = ("sample", "evolve", "correlate", "normalform", "sweep")
OBSERVABLES = ("e_plus", "e_minus", "h_nl", "phi0", "H")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _floats(text: str) -> list:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list:
    return [int(t) for t in text.split(",") if t.strip()]


# key -> (parser, default); None default means required
SCHEMA = {
    "chain.N": (int, None),
    "chain.m1": (float, None),
    "chain.m2": (float, 1.0),
    "chain.K": (float, 1.0),
    "chain.A": (float, 0.0),
    "chain.B": (float, 0.0),
    "sampler.beta": (float, None),
    "sampler.n_samples": (int, 256),
    "sampler.burn_in": (int, 1000),
    "sampler.thin": (int, 10),
    "sampler.step_scale": (float, 0.0),
    "sampler.seed": (int, 0),
    "integrator.dt": (float, 0.0),          # 0 means dt_omega / Omega
    "integrator.dt_omega": (float, 0.05),
    "integrator.t_final": (float, 100.0),
    "integrator.record_stride": (int, 10),
    "integrator.scheme": (str, "verlet2"),
    "experiment.kind": (str, ""),
    "experiment.ensemble_size": (int, 0),   # 0 means sampler.n_samples
    "experiment.observable": (str, "e_plus"),
    "experiment.threshold": (float, 0.2),
    "experiment.normalform_order": (int, 1),
    "experiment.sweep.beta": (_floats, ""),
    "experiment.sweep.mass_ratio": (_floats, ""),
    "experiment.sweep.N": (_ints, ""),
}


def parse_text(text: str) -> dict:
    """Raw key -> string map; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown configuration key")
        if key in out:
            raise ConfigError(key, "duplicate key")
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    chain: ChainParams
    sampler: SamplerConfig
    integrator: IntegratorConfig
    kind: str
    ensemble_size: int
    observable: str
    threshold: float
    normalform_order: int
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def canonical_text(self) -> str:
        return "".join(f"{k} = {self.raw[k]}\n" for k in sorted(self.raw))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def load(text: str, kind: str | None = None, seed: int | None = None) -> ExperimentConfig:
    raw = parse_text(text)
    if seed is not None:
        raw["sampler.seed"] = str(seed)
    if kind is not None:
        if raw.get("experiment.kind", kind) != kind:
            raise ConfigError("experiment.kind",
                              f"config says {raw['experiment.kind']!r} but subcommand is {kind!r}")
        raw["experiment.kind"] = kind
    vals = {}
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                vals[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(key, f"cannot parse {raw[key]!r}: {exc}") from None
        elif default is None:
            raise ConfigError(key, "required key missing")
        else:
            vals[key] = parse(default) if isinstance(default, str) and parse is not str else default
    kind = vals["experiment.kind"]
    if kind not in KINDS:
        raise ConfigError("experiment.kind", f"must be one of {KINDS}")

    def build(section, ctor):
        try:
            return ctor()
        except ValueError as exc:
            raise ConfigError(section, str(exc)) from None

    chain = build("chain", lambda: ChainParams(vals["chain.N"], vals["chain.m1"], vals["chain.m2"],
                                               vals["chain.K"], vals["chain.A"], vals["chain.B"]))
    ens = vals["experiment.ensemble_size"] or vals["sampler.n_samples"]
    sampler = build("sampler", lambda: SamplerConfig(
        vals["sampler.beta"], ens, vals["sampler.burn_in"], vals["sampler.thin"],
        vals["sampler.step_scale"], vals["sampler.seed"]))
    if vals["integrator.scheme"] not in SCHEMES:
        raise ConfigError("integrator.scheme", f"must be one of {SCHEMES}")
    dt = vals["integrator.dt"] or vals["integrator.dt_omega"] / omega_max(chain)
    integrator = build("integrator", lambda: IntegratorConfig(
        dt, vals["integrator.t_final"], vals["integrator.record_stride"], vals["integrator.scheme"]))
    try:
        integrator.check(chain)
    except ValueError as exc:
        raise ConfigError("integrator.dt", str(exc)) from None
    if vals["experiment.observable"] not in OBSERVABLES:
        raise ConfigError("experiment.observable", f"must be one of {OBSERVABLES}")
    order = vals["experiment.normalform_order"]
    if kind == "normalform" and not 0 <= order <= s_order(chain):
        raise ConfigError("experiment.normalform_order",
                          f"{order} is outside 0..{s_order(chain)} for mass ratio {chain.mass_ratio():g}")
    sweep = {"beta": vals["experiment.sweep.beta"], "mass_ratio": vals["experiment.sweep.mass_ratio"],
             "N": vals["experiment.sweep.N"]}
    if kind == "sweep":
        for axis, values in sweep.items():
            if not values:
                raise ConfigError(f"experiment.sweep.{axis}", "sweep axis must be non-empty")
        for N in sweep["N"]:
            if N < 2:
                raise ConfigError("experiment.sweep.N", f"N must be >= 2, got {N}")
        for r in sweep["mass_ratio"]:
            if r <= 1:
                raise ConfigError("experiment.sweep.mass_ratio", f"mass ratio must exceed 1, got {r}")
        for b in sweep["beta"]:
            if b <= 0:
                raise ConfigError("experiment.sweep.beta", f"beta must be positive, got {b}")
    if kind in ("correlate", "sweep") and ens < 64:
        raise ConfigError("experiment.ensemble_size", "autocorrelation needs at least 64 trajectories")
    raw = dict(raw)
    return ExperimentConfig(chain, sampler, integrator, kind, ens, vals["experiment.observable"],
                            vals["experiment.threshold"], order, sweep, raw)
