"""Experiment configuration: TOML sections mapped onto dataclasses.

Unknown sections or keys are rejected; ``to_dict`` gives the fully
resolved configuration that the CLI echoes next to its outputs.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class SourceConfig:
    kind: str = "truncated_gaussian_mixture"
    dim: int = 1
    weights: list = field(default_factory=lambda: [0.5, 0.5])
    means: list = field(default_factory=lambda: [-1.0, 1.0])
    stds: list = field(default_factory=lambda: [0.25, 0.25])
    M: float = 2.5
    low: list = field(default_factory=lambda: [0.0])
    high: list = field(default_factory=lambda: [1.0])
    holder_gamma: float = 2.0


@dataclass
class NoiseConfig:
    kind: str = "laplace"
    sigma: float | list = 0.3


@dataclass
class KernelConfig:
    kind: str = "flat_top"
    taper_start: float = 0.5
    freq_nodes: int = 4096
    cf_floor: float = 1e-12


@dataclass
class GridConfig:
    nodes_per_axis: int = 1024
    margin_factor: float = 3.0
    oracle_factor: int = 2


@dataclass
class ClusteringConfig:
    k: int = 2
    restarts: int = 8
    max_iters: int = 100
    tol: float = 1e-8
    oracle_restart_factor: int = 8
    hessian_step: float = 0.05


@dataclass
class BandwidthConfig:
    rule: str = "theoretical"
    c0: float = 1.0
    value: float = 0.0
    candidates: list = field(default_factory=list)
    folds: int = 5


@dataclass
class ExperimentSection:
    sample_sizes: list = field(default_factory=lambda: [250, 500, 1000, 2000, 4000, 8000])
    replications: int = 100
    n: int = 2000
    sample_file: str = ""
    bias_lambdas: list = field(default_factory=lambda: [0.4, 0.2, 0.1])
    bias_codebook: list = field(default_factory=lambda: [-1.0, 1.0])
    bias_codebook_alt: list = field(default_factory=lambda: [-0.7, 1.4])
    naive_baseline: bool = True


@dataclass
class Config:
    source: SourceConfig = field(default_factory=SourceConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    bandwidth: BandwidthConfig = field(default_factory=BandwidthConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    master_seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(Config)
             if f.name != "master_seed"}


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float, list)):
            raise ConfigError(f"{where}: expected a number")
        return value if isinstance(value, list) else float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            value = [value]
        return value
    return value


def config_from_dict(data: dict) -> Config:
    cfg = Config()
    for key, value in data.items():
        if key == "master_seed":
            cfg.master_seed = _coerce(value, 0, key)
            continue
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config section [{key}]")
        if not isinstance(value, dict):
            raise ConfigError(f"[{key}] must be a table")
        section = getattr(cfg, key)
        known = {f.name for f in dataclasses.fields(section)}
        for k, v in value.items():
            if k not in known:
                raise ConfigError(f"unknown key {key}.{k}")
            setattr(section, k, _coerce(v, getattr(section, k), f"{key}.{k}"))
    return cfg


def load_config(path) -> Config:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)
