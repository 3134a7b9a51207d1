"""Experiment configuration: a YAML document with strict keys."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .frontend import Pulse
from .kernels import QuadratureConfig
from .nbgd import NbgdConfig
from .ssfm import FiberParams, SsfmConfig


@dataclass(frozen=True)
class SystemConfig:
    symbol_rate: float = 60e9
    modulation: str = "dp-16qam"
    N: int = 8192
    seed: int = 1
    oversampling: int = 8


@dataclass(frozen=True)
class FrpSection:
    M: tuple = (1,)
    kernel_source: str = "both"  # integral | nbgd | both
    # extra memories evaluated with integral kernels only (too large to train)
    M_integral: tuple = (20,)


@dataclass(frozen=True)
class SweepConfig:
    powers_dbm: tuple = tuple(float(p) for p in range(-4, 18))
    memories: tuple = tuple(range(0, 7))
    memory_powers_dbm: tuple = (0.0, 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    fiber: FiberParams = field(default_factory=FiberParams)
    pulse: Pulse = field(default_factory=Pulse)
    ssfm: SsfmConfig = field(default_factory=SsfmConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    frp: FrpSection = field(default_factory=FrpSection)
    nbgd: NbgdConfig = field(default_factory=NbgdConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output_dir: str = "results"

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def section_hash(self, *names: str) -> str:
        """Short SHA-256 of the named sections, used to tie artifacts to their inputs."""
        d = self.to_dict()
        blob = json.dumps({n: d[n] for n in names}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def data_hash(self) -> str:
        return self.section_hash("system", "fiber", "pulse", "ssfm")

    @property
    def kernel_hash(self) -> str:
        return self.section_hash("system", "fiber", "pulse", "quadrature")

    @property
    def nbgd_hash(self) -> str:
        return self.section_hash("system", "fiber", "pulse", "ssfm", "nbgd")

    @property
    def all_memories(self) -> list[int]:
        return sorted(set(self.frp.M) | set(self.frp.M_integral) | set(self.sweep.memories))


_SECTIONS = {
    "system": SystemConfig,
    "fiber": FiberParams,
    "pulse": Pulse,
    "ssfm": SsfmConfig,
    "quadrature": QuadratureConfig,
    "frp": FrpSection,
    "nbgd": NbgdConfig,
    "sweep": SweepConfig,
}
_LIST_FIELDS = {"M", "M_integral", "powers_dbm", "memories", "memory_powers_dbm"}


def _coerce(val, kind, where: str):
    # YAML 1.1 reads exponents without a sign (60e9) as strings
    if kind is bool or isinstance(val, bool):
        if not isinstance(val, bool) or kind is not bool:
            raise ConfigError(f"{where}: expected {kind.__name__}, got {val!r}")
        return val
    if kind is float:
        try:
            return float(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected a number, got {val!r}") from None
    if kind is int:
        if isinstance(val, float) and val.is_integer():
            return int(val)
        if not isinstance(val, int):
            raise ConfigError(f"{where}: expected an integer, got {val!r}")
        return val
    if kind is str and not isinstance(val, str):
        raise ConfigError(f"{where}: expected a string, got {val!r}")
    return val


def _build(cls, name: str, raw) -> object:
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(sorted(unknown))}")
    defaults = {f.name: getattr(cls(), f.name) for f in fields(cls)}
    kwargs = {}
    for key, val in raw.items():
        if key in _LIST_FIELDS:
            items = val if isinstance(val, (list, tuple)) else (val,)
            kind = type(defaults[key][0]) if defaults[key] else float
            val = tuple(_coerce(v, kind, f"{name}.{key}") for v in items)
        elif defaults[key] is not None and val is not None:
            val = _coerce(val, type(defaults[key]), f"{name}.{key}")
        kwargs[key] = val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(raw) - set(_SECTIONS) - {"output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    parts = {name: _build(cls, name, raw.get(name)) for name, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(**parts, output_dir=str(raw.get("output_dir", "results")))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    s = cfg.system
    if s.modulation.lower() != "dp-16qam":
        raise ConfigError(f"only dp-16qam is supported, got {s.modulation!r}")
    if s.N < 1 or s.symbol_rate <= 0 or s.oversampling < 2:
        raise ConfigError(f"invalid system section: {s}")
    if cfg.frp.kernel_source not in ("integral", "nbgd", "both"):
        raise ConfigError(f"unknown kernel_source {cfg.frp.kernel_source!r}")
    if not cfg.frp.M or any(int(m) != m or m < 0 for m in cfg.frp.M + cfg.frp.M_integral):
        raise ConfigError(f"frp.M and frp.M_integral must be non-negative integers, got {cfg.frp}")
    if not cfg.sweep.powers_dbm or not cfg.sweep.memories:
        raise ConfigError("sweep.powers_dbm and sweep.memories must be non-empty")
    if any(not math.isfinite(p) for p in cfg.sweep.powers_dbm + cfg.sweep.memory_powers_dbm):
        raise ConfigError("sweep powers must be finite")


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return config_from_dict(raw)


def with_overrides(cfg: ExperimentConfig, seed=None, output=None) -> ExperimentConfig:
    if seed is not None:
        cfg = replace(cfg, system=replace(cfg.system, seed=int(seed)))
    if output is not None:
        cfg = replace(cfg, output_dir=str(output))
    return cfg
