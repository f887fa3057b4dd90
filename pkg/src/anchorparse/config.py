"""TOML run configuration: defaults < config file < command-line flags."""

from __future__ import annotations

import os
import tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, TypeVar

from .datagen import GenConfig
from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

CONFIG_VERSION = 1
OUT_ENV = "ANCHORPARSE_OUT"
SECTIONS = ("gen", "model", "train")

C = TypeVar("C", GenConfig, ModelConfig, TrainConfig)


@dataclass
class RunConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    path: Path | None = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": CONFIG_VERSION,
            "gen": asdict(self.gen),
            "model": self.model.to_dict(),
            "train": asdict(self.train),
        }


def _coerce(section: str, name: str, default: Any, value: Any) -> Any:
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value)
        value = tuple(value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{section}.{name} expects {type(default).__name__}, got {value!r}")
    return value


def section_from_dict(cls: type[C], section: str, data: Mapping[str, Any], base: C | None = None) -> C:
    """`base` (or the defaults) with the keys of one config table applied."""

    current = base if base is not None else cls()
    known = {f.name: getattr(current, f.name) for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {unknown}")
    values = {name: _coerce(section, name, known[name], value) for name, value in data.items()}
    return replace(current, **values)


def config_from_dict(data: Mapping[str, Any], path: Path | None = None) -> RunConfig:
    version = data.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {version!r}")
    unknown = sorted(set(data) - {"version", *SECTIONS})
    if unknown:
        raise ConfigError(f"unknown config tables {unknown}")
    tables = {}
    for section in SECTIONS:
        table = data.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        tables[section] = table
    return RunConfig(
        gen=section_from_dict(GenConfig, "gen", tables["gen"]),
        model=section_from_dict(ModelConfig, "model", tables["model"]),
        train=section_from_dict(TrainConfig, "train", tables["train"]),
        path=path,
    )


def load_config(path: Path | None) -> RunConfig:
    """Read a TOML config; `None` gives the defaults."""

    if path is None:
        return RunConfig()
    if not path.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, path)


def with_overrides(cfg: C, section: str, **overrides: Any) -> C:
    """Apply command-line values; `None` means the flag was not given."""

    given = {k: v for k, v in overrides.items() if v is not None}
    return section_from_dict(type(cfg), section, given, base=cfg) if given else cfg


def default_out_dir(fallback: str = "runs") -> Path:
    return Path(os.environ.get(OUT_ENV) or fallback)
