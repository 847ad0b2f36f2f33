"""Experiment configuration: YAML parsing, validation, canonical hashing.

Configs are plain nested key-value files. Hashing canonicalizes the parsed
structure (sorted keys, normalized scalars) so whitespace and key order do
not change the hash; timestamps never enter configs.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..links import DEFAULT_ACTIVATIONS, PolynomialLink, resolve_link


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "default"
    link: object = "quad-down"            # preset name or coefficient list
    activation: object | None = None      # defaults per-preset
    d: int = 128
    dims: tuple = ()
    n_neurons: int = 32
    tau: float = 0.0
    beta1: float = 8.0
    beta1_grid: tuple = ()
    beta2: float = 0.3
    beta2_grid: tuple = ()
    beta_star: float = 0.3
    radius: float | None = None
    r_slack: float = 2.0
    eta1: float | None = None
    c_wk: float = 0.5
    epsilon: float = 0.1
    c_b: float = 0.5
    s_init: float = 1.0
    t2: int = 10_000
    t2_grid: tuple = ()
    delta0: float = 0.05
    tolerance_eta: float = 1.0            # eta for admissible-set selection
    seeds: tuple = (1,)
    repeats: int = 5
    mc_budget: int = 100_000
    schemes: tuple = ("label",)
    c_lambda: float = 1.0
    c_eta: float = 0.5
    delta: float = 0.05
    quantile: float = 0.25
    envelope: object | None = None        # scalar or {beta: value} table
    alpha0: float | None = None
    exact_init: bool = True
    backend: str = "auto"
    oracle_reward: bool = False           # value-gap with r_hat = r* (no fit)
    quick: bool = False

    def resolved_link(self) -> PolynomialLink:
        return resolve_link(self.link)

    def resolved_activation(self) -> PolynomialLink:
        if self.activation is not None:
            return resolve_link(self.activation)
        if isinstance(self.link, str) and self.link in DEFAULT_ACTIVATIONS:
            return resolve_link(DEFAULT_ACTIVATIONS[self.link])
        return self.resolved_link()

    def canonical(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = _canonical_value(value)
        return out

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True,
                             separators=(",", ":")).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        if offset == 0:
            return self
        shifted = tuple(int(s) + offset for s in self.seeds)
        return replace_config(self, seeds=shifted)


def replace_config(cfg: ExperimentConfig, **updates) -> ExperimentConfig:
    data = asdict(cfg)
    data.update(updates)
    return ExperimentConfig(**{k: _freeze(v) for k, v in data.items()})


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _canonical_value(value):
    if isinstance(value, (list, tuple)):
        return [_canonical_value(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _canonical_value(v) for k, v in sorted(value.items(),
                                                               key=lambda kv: str(kv[0]))}
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return float(value)
    return str(value)


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def config_from_dict(data: dict, path: str = "") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}; "
                          f"known fields: {sorted(_FIELD_NAMES)}")
    frozen = {k: _freeze(v) for k, v in data.items()}
    try:
        cfg = ExperimentConfig(**frozen)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    try:
        cfg.resolved_link()
    except KeyError as exc:
        raise ConfigError(f"link: {exc.args[0]}") from exc
    if cfg.activation is not None:
        try:
            cfg.resolved_activation()
        except KeyError as exc:
            raise ConfigError(f"activation: {exc.args[0]}") from exc
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds: entries must be distinct")
    if not cfg.seeds:
        raise ConfigError("seeds: at least one seed is required")
    for name in ("dims", "beta1_grid", "beta2_grid", "t2_grid"):
        grid = getattr(cfg, name)
        if grid and not all(v > 0 for v in grid):
            raise ConfigError(f"{name}: entries must be positive")
    for name in ("tau",):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name}: must be >= 0")
    for name in ("beta1", "beta2", "beta_star", "delta0", "c_b", "s_init"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name}: must be positive")
    if cfg.schemes and not set(cfg.schemes) <= {"label", "surrogate", "uniform"}:
        raise ConfigError(f"schemes: unknown entries in {cfg.schemes}")


def load_config(path: str | Path) -> ExperimentConfig:
    raw = Path(path).read_text()
    try:
        data = yaml.safe_load(raw) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    return config_from_dict(data)
