"""Run configuration: schema, JSON round-trip, and dotted-key overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .genome import GenomeConfig, MutationRates
from .smallnet import TrainConfig

MODE_FULL = "full"
MODE_SURROGATE = "surrogate"


@dataclass
class SurrogateConfig:
    h: int = 3
    theta_log10_bounds: tuple[float, float] = (-6.0, 2.0)
    nugget: float = 1e-8
    starts: int = 5
    rounds: int = 3
    grid_points: int = 20

    def validate(self) -> None:
        if self.h < 1:
            raise ConfigError("surrogate.h must be >= 1")
        lo, hi = self.theta_log10_bounds
        if lo >= hi:
            raise ConfigError("surrogate.theta_log10_bounds must be increasing")
        if self.nugget <= 0:
            raise ConfigError("surrogate.nugget must be positive")


@dataclass
class EnergyParams:
    """Inputs of the energy estimate E = r_t * (P_c*U + P_m) * PUE * PSF."""

    runtime_hours: float = 0.0
    cores_kw: float = 0.065
    usage: float = 1.0
    memory_kw: float = 0.01
    pue: float = 1.67
    psf: float = 1.0

    def validate(self) -> None:
        if min(self.runtime_hours, self.cores_kw, self.memory_kw) < 0:
            raise ConfigError("energy durations and power draws must be non-negative")
        if not 0.0 <= self.usage <= 1.0:
            raise ConfigError("energy.usage must be in [0, 1]")
        if self.pue < 1.0 or self.psf < 1.0:
            raise ConfigError("energy.pue and energy.psf must be >= 1")


@dataclass
class RunConfig:
    mode: str = MODE_SURROGATE
    dataset: str = ""
    out_dir: str = ""
    master_seed: int = 20240
    population: int = 20
    generations: int = 15
    full_fraction: float = 0.4
    tournament_k: int = 3
    elitism: int = 1
    workers: int = 1
    archive_cap: int = 0  # 0 = unbounded
    genome: GenomeConfig = field(default_factory=GenomeConfig)
    mutation: MutationRates = field(default_factory=MutationRates)
    train: TrainConfig = field(default_factory=TrainConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    energy: EnergyParams = field(default_factory=EnergyParams)

    def validate(self) -> None:
        if self.mode not in (MODE_FULL, MODE_SURROGATE):
            raise ConfigError(f"mode must be 'full' or 'surrogate', got {self.mode!r}")
        if self.population < 2:
            raise ConfigError("population must be >= 2")
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        if not 0.0 < self.full_fraction <= 1.0:
            raise ConfigError("full_fraction must be in (0, 1]")
        if self.tournament_k < 1:
            raise ConfigError("tournament_k must be >= 1")
        if self.elitism not in (0, 1):
            raise ConfigError("elitism must be 0 or 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.archive_cap < 0:
            raise ConfigError("archive_cap must be >= 0")
        if not (0.0 <= self.mutation.micro <= 1.0 and 0.0 <= self.mutation.macro <= 1.0):
            raise ConfigError("mutation rates must be in [0, 1]")
        self.genome.validate()
        self.train.validate()
        self.surrogate.validate()
        self.energy.validate()


_NESTED = {
    "genome": GenomeConfig,
    "mutation": MutationRates,
    "train": TrainConfig,
    "surrogate": SurrogateConfig,
    "energy": EnergyParams,
}


def _build(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("theta_log10_bounds",):
        if key in kwargs and isinstance(kwargs[key], list):
            kwargs[key] = tuple(kwargs[key])
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    top = {k: v for k, v in data.items() if k not in _NESTED}
    cfg = _build(RunConfig, top)
    for key, cls in _NESTED.items():
        if key in data:
            if not isinstance(data[key], dict):
                raise ConfigError(f"config section {key!r} must be an object")
            setattr(cfg, key, _build(cls, data[key]))
    cfg.validate()
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    data = dataclasses.asdict(cfg)
    # JSON-canonical form: JSON has no tuples, so bounds echo as a list
    data["surrogate"]["theta_log10_bounds"] = list(data["surrogate"]["theta_log10_bounds"])
    return data


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def apply_override(cfg: RunConfig, dotted_key: str, raw_value: str) -> None:
    """Set a (possibly nested) config field from a ``--key=value`` string.

    Values parse as JSON when possible and fall back to plain strings, so
    ``--train.learning_rate=0.05`` and ``--mode=full`` both work.
    """
    parts = dotted_key.split(".")
    target = cfg
    for part in parts[:-1]:
        if not hasattr(target, part):
            raise ConfigError(f"unknown config section {part!r} in {dotted_key!r}")
        target = getattr(target, part)
    leaf = parts[-1]
    if not dataclasses.is_dataclass(target) or leaf not in {
        f.name for f in dataclasses.fields(target)
    }:
        raise ConfigError(f"unknown config key {dotted_key!r}")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    if isinstance(value, list):
        value = tuple(value)
    if leaf == "group_proportions" and isinstance(value, tuple):
        raise ConfigError("group_proportions override must be a JSON object")
    setattr(target, leaf, value)
