"""Experiment configuration: INI files with unit-suffixed keys, plus flag overrides.

Every field lives in one INI section.  Key names carry their unit
(``capacity_files``, ``aggregate_rate_per_time``, ``horizon_requests``) so a
config file reads unambiguously without the code at hand.  An empty value
means "use the documented default" for optional numbers.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from typing import Any

PRESETS = ("lru", "fifo", "proportional", "max_min", "lfu", "beta_fair")
ALGORITHMS = ("offline", "dual", "primal", "primal_dual", "hit_miss")
FORMULATIONS = ("hard", "soft")
RATE_KNOWLEDGE = ("exact", "estimated")


class ConfigError(ValueError):
    pass


def _f(section: str, default: Any, help: str, choices: tuple | None = None):
    return field(default=default, metadata={"section": section, "help": help, "choices": choices})


@dataclass
class ExperimentConfig:
    # catalog
    files: int = _f("catalog", 500, "number of files N")
    zipf_exponent: float = _f("catalog", 0.8, "Zipf popularity exponent s")
    aggregate_rate_per_time: float = _f("catalog", 1.0, "aggregate request rate Lambda")
    rates_csv: str = _f("catalog", "", "optional CSV with file_id,lambda columns; overrides the Zipf catalog")
    # policy
    preset: str = _f("policy", "lru", "utility preset", PRESETS)
    beta: float = _f("policy", 1.0, "beta for the beta_fair preset")
    rate_weighted: bool = _f("policy", False, "beta_fair weights are the request rates")
    # capacity
    capacity_files: float = _f("capacity", 50.0, "cache capacity B in expected files")
    formulation: str = _f("capacity", "hard", "hard or soft capacity", FORMULATIONS)
    cost_kind: str = _f("capacity", "exponential", "soft-capacity cost", ("exponential", "quadratic_ramp"))
    cost_scale: float = _f("capacity", 1.0, "cost scale c")
    cost_stiffness: float = _f("capacity", 1.0, "cost stiffness a per file of excess")
    # algorithm
    algorithm: str = _f("algorithm", "offline", "allocation algorithm", ALGORITHMS)
    cache_kind: str = _f("algorithm", "", "reset or non_reset; lru/fifo presets force their own", ("", "reset", "non_reset"))
    rate_knowledge: str = _f("algorithm", "exact", "exact or estimated request rates", RATE_KNOWLEDGE)
    gamma_per_file: str = _f("algorithm", "", "dual step size gamma (price per file of excess); empty = default")
    gain: str = _f("algorithm", "", "primal gain k for every file; empty = default")
    decay: str = _f("algorithm", "none", "step-size schedule", ("none", "sqrt"))
    estimator: str = _f("algorithm", "one_sample", "rate estimator", ("one_sample", "ewma"))
    estimator_sample_on: str = _f("algorithm", "every", "when t - r is sampled", ("every", "hit"))
    theta: float = _f("algorithm", 0.1, "EWMA factor of the rate estimator")
    theta_h: float = _f("algorithm", 0.05, "EWMA factor of the hit-probability estimator")
    hit_miss_step: str = _f("algorithm", "log", "hit/miss timer update domain", ("log", "additive"))
    hit_miss_gain: float = _f("algorithm", 1.0, "hit/miss step multiplier")
    # simulation
    horizon_requests: int = _f("simulation", 200000, "requests to simulate")
    warmup_fraction: float = _f("simulation", 0.1, "fraction of requests excluded from metrics")
    seed: int = _f("simulation", 1, "request-stream seed")
    occupancy_every_requests: int = _f("simulation", 1000, "occupancy sample decimation")
    trajectory_every_requests: int = _f("simulation", 1000, "controller trajectory decimation")
    provisioned_files: str = _f("simulation", "", "physical buffer size to audit; empty = none")
    # fluid
    t_end_time: float = _f("fluid", 60.0, "fluid integration horizon")
    dt_time: str = _f("fluid", "", "initial Euler step; empty = 1e-2 / max(gamma, max k)")
    record_every_steps: int = _f("fluid", 100, "trajectory decimation in accepted steps")
    # bound
    headroom: float = _f("bound", 0.1, "relative headroom epsilon")
    sizing_scale: float = _f("bound", 1.0, "c in B = c N^(1-s)")
    # output
    output_dir: str = _f("output", "run", "artifact directory (relative paths resolve under $UTILITYCACHE_OUTPUT_ROOT)")

    def validate(self) -> "ExperimentConfig":
        for f in fields(self):
            choices = f.metadata.get("choices")
            if choices and getattr(self, f.name) not in choices:
                raise ConfigError(f"{f.name}={getattr(self, f.name)!r} not in {choices}")
        forced = {"lru": "reset", "fifo": "non_reset"}.get(self.preset)
        if forced:
            if self.cache_kind and self.cache_kind != forced:
                raise ConfigError(f"preset {self.preset} runs in a {forced} cache, not {self.cache_kind}")
            self.cache_kind = forced
        elif not self.cache_kind:
            self.cache_kind = "reset"
        if self.files < 1 and not self.rates_csv:
            raise ConfigError("files must be at least 1")
        if self.capacity_files <= 0:
            raise ConfigError("capacity_files must be positive")
        if self.horizon_requests < 1:
            raise ConfigError("horizon_requests must be at least 1")
        if self.preset == "lfu" and self.algorithm != "offline":
            raise ConfigError("the lfu preset (beta = 0) has no online controller")
        if self.formulation == "soft" and self.algorithm not in ("offline", "primal"):
            raise ConfigError("soft capacity is solved offline or by the primal controller")
        if self.algorithm == "primal" and self.formulation != "soft":
            raise ConfigError("the primal controller needs formulation = soft")
        for name in ("gamma_per_file", "gain", "dt_time", "provisioned_files"):
            value = getattr(self, name)
            if value != "":
                try:
                    if float(value) <= 0:
                        raise ValueError
                except ValueError:
                    raise ConfigError(f"{name} must be empty or a positive number, got {value!r}") from None
        return self

    def optional(self, name: str) -> float | None:
        value = getattr(self, name)
        return None if value == "" else float(value)

    # -- INI round trip --------------------------------------------------

    def to_ini(self, extra: dict[str, dict[str, str]] | None = None) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for f in fields(self):
            section = f.metadata["section"]
            if not parser.has_section(section):
                parser.add_section(section)
            parser.set(section, f.name, _format(getattr(self, f.name)))
        for section, items in (extra or {}).items():
            parser.add_section(section)
            for key, value in items.items():
                parser.set(section, key, value)
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(text)
        known = {f.name: f for f in fields(cls)}
        values = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                f = known.get(key)
                if f is None or f.metadata["section"] != section:
                    if section in {f.metadata["section"] for f in fields(cls)}:
                        raise ConfigError(f"unknown key [{section}] {key}")
                    continue
                values[key] = _parse(f, raw)
        return cls(**values)

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name: f for f in fields(self)}
        parsed = {k: _parse(known[k], v) if isinstance(v, str) else v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **parsed)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(f, raw: str):
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{f.name}: cannot parse {raw!r} as {kind}") from None
    return raw.strip()


def config_fields():
    return fields(ExperimentConfig)
