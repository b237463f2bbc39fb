"""TOML run configuration: validation and law construction.

Unknown keys are rejected and every numeric parameter is validated
against its family domain before anything runs, so a typo fails fast
with the offending key named.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import laws
from .process import VARIANTS, ProcessSpec


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


def _take(section: dict, context: str, known: dict) -> dict:
    """Extract known keys from a section, rejecting unknown ones.

    ``known`` maps key -> (required, type or tuple of types).
    """
    out = {}
    for key in section:
        if key not in known:
            raise ConfigError(f"unknown key '{context}.{key}'")
    for key, (required, types) in known.items():
        if key in section:
            value = section[key]
            if types is not None and not isinstance(value, types):
                raise ConfigError(f"'{context}.{key}' has invalid type "
                                  f"{type(value).__name__}")
            out[key] = value
        elif required:
            raise ConfigError(f"missing required key '{context}.{key}'")
    return out


_NUM = (int, float)


def build_service(section: dict, context: str = "service") -> laws.ServiceLaw:
    family = section.get("family")
    if family is None:
        raise ConfigError(f"missing required key '{context}.family'")
    try:
        if family == "exponential":
            p = _take(section, context, {"family": (True, str), "mean": (True, _NUM)})
            return laws.Exponential(float(p["mean"]))
        if family == "deterministic":
            p = _take(section, context, {"family": (True, str), "value": (True, _NUM)})
            return laws.Deterministic(float(p["value"]))
        if family == "pareto":
            p = _take(section, context, {"family": (True, str), "shape": (True, _NUM),
                                         "scale": (True, _NUM)})
            return laws.Pareto(float(p["shape"]), float(p["scale"]))
        if family == "empirical":
            p = _take(section, context, {"family": (True, str), "values": (True, list),
                                         "probs": (True, list)})
            return laws.EmpiricalService(tuple(p["values"]), tuple(p["probs"]))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid parameters in '{context}': {exc}") from exc
    raise ConfigError(f"unknown service family '{context}.family={family}'")


def build_offspring(section: dict, context: str = "process.offspring") -> laws.OffspringLaw:
    family = section.get("family")
    if family is None:
        raise ConfigError(f"missing required key '{context}.family'")
    try:
        if family == "frechet":
            p = _take(section, context, {"family": (True, str), "c": (True, _NUM),
                                         "beta": (True, _NUM)})
            return laws.Frechet(float(p["c"]), float(p["beta"]))
        if family == "unit_frechet":
            p = _take(section, context, {"family": (True, str), "beta": (True, _NUM)})
            return laws.UnitFrechet(float(p["beta"]))
        if family == "gumbel_shifted":
            p = _take(section, context, {"family": (True, str), "m": (True, _NUM)})
            return laws.GumbelShifted(float(p["m"]))
        if family == "queue_induced":
            p = _take(section, context, {"family": (True, str), "lam": (True, _NUM),
                                         "service": (True, dict)})
            return laws.QueueInduced(float(p["lam"]),
                                     build_service(p["service"], context + ".service"))
        if family == "integer_tail":
            p = _take(section, context, {"family": (True, str), "q": (True, _NUM)})
            return laws.IntegerTail(float(p["q"]))
        if family == "empirical":
            p = _take(section, context, {"family": (True, str), "values": (True, list),
                                         "probs": (True, list),
                                         "integer": (False, bool)})
            return laws.Empirical(tuple(p["values"]), tuple(p["probs"]),
                                  integer=p.get("integer", False))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid parameters in '{context}': {exc}") from exc
    raise ConfigError(f"unknown offspring family '{context}.family={family}'")


def build_environment(section: dict,
                      context: str = "process.environment") -> laws.EnvironmentLaw:
    family = section.get("family")
    if family is None:
        raise ConfigError(f"missing required key '{context}.family'")
    try:
        if family == "degenerate":
            p = _take(section, context, {"family": (True, str), "a": (True, _NUM)})
            return laws.Degenerate(float(p["a"]))
        if family == "exponential":
            p = _take(section, context, {"family": (True, str), "theta": (True, _NUM)})
            return laws.ExponentialEnv(float(p["theta"]))
        if family == "stable":
            p = _take(section, context, {"family": (True, str), "alpha": (True, _NUM),
                                         "c": (False, _NUM)})
            return laws.StrictlyStable(float(p["alpha"]), float(p.get("c", 1.0)))
        if family == "heavy_log_tail":
            _take(section, context, {"family": (True, str)})
            return laws.HeavyLogTail()
        if family == "empirical":
            p = _take(section, context, {"family": (True, str), "values": (True, list),
                                         "probs": (True, list)})
            return laws.EmpiricalEnv(tuple(p["values"]), tuple(p["probs"]))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid parameters in '{context}': {exc}") from exc
    raise ConfigError(f"unknown environment family '{context}.family={family}'")


@dataclass
class RunConfig:
    spec: Optional[ProcessSpec]
    n_steps: int = 100
    n_paths: int = 1
    seed: int = 0
    burn_in: int = 200
    out_format: str = "csv"
    out_path: Optional[str] = None
    stationary: dict = field(default_factory=dict)
    queue: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return parse_config(raw)


def parse_config(raw: dict) -> RunConfig:
    top = _take(raw, "<top>", {
        "process": (False, dict),
        "run": (False, dict),
        "output": (False, dict),
        "stationary": (False, dict),
        "queue": (False, dict),
        "verify": (False, dict),
    })

    spec = None
    if "process" in top:
        proc = _take(top["process"], "process", {
            "variant": (True, str),
            "offspring": (False, dict),
            "offspring_family": (False, list),
            "environment": (False, dict),
            "initial": (False, _NUM),
        })
        variant = proc["variant"]
        if variant not in VARIANTS:
            raise ConfigError(f"'process.variant' must be one of {', '.join(VARIANTS)}")
        env = build_environment(proc["environment"]) if "environment" in proc \
            else laws.Degenerate(1.0)
        if variant == "mbpre-integer":
            if "offspring_family" not in proc:
                raise ConfigError("mbpre-integer requires 'process.offspring_family'")
            family = [build_offspring(s, f"process.offspring_family[{i}]")
                      for i, s in enumerate(proc["offspring_family"])]
            offspring = family
        else:
            if "offspring" not in proc:
                raise ConfigError("missing required key 'process.offspring'")
            offspring = build_offspring(proc["offspring"])
        initial = float(proc.get("initial", 1.0))
        try:
            spec = ProcessSpec(variant, offspring, env, initial)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    cfg = RunConfig(spec=spec)
    if "run" in top:
        run = _take(top["run"], "run", {
            "n_steps": (False, int), "n_paths": (False, int),
            "seed": (False, int), "burn_in": (False, int),
        })
        cfg.n_steps = run.get("n_steps", cfg.n_steps)
        cfg.n_paths = run.get("n_paths", cfg.n_paths)
        cfg.seed = run.get("seed", cfg.seed)
        cfg.burn_in = run.get("burn_in", cfg.burn_in)
        for name in ("n_steps", "n_paths", "burn_in"):
            if getattr(cfg, name) < 0:
                raise ConfigError(f"'run.{name}' must be nonnegative")
    if "output" in top:
        out = _take(top["output"], "output", {
            "format": (False, str), "path": (False, str),
        })
        cfg.out_format = out.get("format", cfg.out_format)
        if cfg.out_format not in ("csv", "jsonl"):
            raise ConfigError("'output.format' must be 'csv' or 'jsonl'")
        cfg.out_path = out.get("path", cfg.out_path)
    if "stationary" in top:
        cfg.stationary = _take(top["stationary"], "stationary", {
            "n_samples": (False, int), "burn_in": (False, int),
            "moments": (False, list), "override": (False, bool),
        })
    if "queue" in top:
        q = _take(top["queue"], "queue", {
            "arrival_rate": (True, _NUM), "service": (True, dict),
            "mode": (False, str), "n_stages": (False, int),
        })
        cfg.queue = {
            "arrival_rate": float(q["arrival_rate"]),
            "service": build_service(q["service"], "queue.service"),
            "mode": q.get("mode", "continuous"),
            "n_stages": q.get("n_stages", 1000),
        }
        if cfg.queue["mode"] not in ("continuous", "discrete"):
            raise ConfigError("'queue.mode' must be 'continuous' or 'discrete'")
        if cfg.queue["n_stages"] < 1:
            raise ConfigError("'queue.n_stages' must be positive")
    if "verify" in top:
        cfg.verify = _take(top["verify"], "verify", {
            "n_pairs": (False, int), "n_coupled_steps": (False, int),
            "n_transport_cases": (False, int), "n_kernel_samples": (False, int),
        })
    return cfg
