"""Sectioned key-value run configuration.

A run is fully described by three sections (data, model, train).  Files
use INI syntax; unknown sections or keys are hard errors so a resolved
config written next to a run's outputs re-runs it exactly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from .harness.data import ArtifactSpec
from .harness.train import TrainConfig
from .network import ModelConfig


class ConfigError(Exception):
    """Invalid configuration file, key or value."""


@dataclass(frozen=True)
class DataConfig:
    seed: int = 7
    n_per_class: int = 300
    image_size: int = 64
    artifact_bands: Tuple[int, ...] = ArtifactSpec().bands
    artifact_amplitude: float = ArtifactSpec().amplitude
    artifact_min_extent: int = ArtifactSpec().min_extent
    artifact_max_extent: int = ArtifactSpec().max_extent

    @property
    def artifact(self) -> ArtifactSpec:
        return ArtifactSpec(
            bands=self.artifact_bands,
            amplitude=self.artifact_amplitude,
            min_extent=self.artifact_min_extent,
            max_extent=self.artifact_max_extent,
        )


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = DataConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()


_SECTIONS = {"data": DataConfig, "model": ModelConfig, "train": TrainConfig}


def _parse_value(raw: str, typ, key: str):
    raw = raw.strip()
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is str:
            return raw
        if typ == Tuple[int, ...]:
            if not raw:
                return ()
            return tuple(int(x) for x in raw.replace(" ", "").split(","))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigError(f"unsupported config type for {key}")


def _field_types(cls) -> Dict[str, type]:
    out = {}
    for f in fields(cls):
        if f.name == "n_classes":
            continue  # fixed binary task
        typ = f.type
        if isinstance(typ, str):
            typ = {"int": int, "float": float, "bool": bool, "str": str,
                   "Tuple[int, ...]": Tuple[int, ...]}.get(typ, typ)
        out[f.name] = typ
    return out


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[Tuple[str, str], str]] = None,
) -> RunConfig:
    """Parse a config file and apply (section, key) -> raw-string overrides."""
    values: Dict[str, Dict[str, object]] = {name: {} for name in _SECTIONS}

    if path is not None:
        parser = configparser.ConfigParser()
        try:
            read = parser.read(Path(path), encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config file: {exc}") from exc
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            types = _field_types(_SECTIONS[section])
            for key, raw in parser.items(section):
                if key not in types:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                values[section][key] = _parse_value(raw, types[key], f"{section}.{key}")

    for (section, key), raw in (overrides or {}).items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        types = _field_types(_SECTIONS[section])
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        values[section][key] = _parse_value(str(raw), types[key], f"{section}.{key}")

    try:
        return RunConfig(
            data=DataConfig(**values["data"]),
            model=ModelConfig(**values["model"]),
            train=TrainConfig(**values["train"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def write_config(config: RunConfig, path: Path) -> None:
    """Serialise every resolved value so the file alone re-runs the job."""
    lines = []
    for section, cls in _SECTIONS.items():
        obj = getattr(config, section)
        lines.append(f"[{section}]")
        for name in _field_types(cls):
            lines.append(f"{name} = {_format_value(getattr(obj, name))}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")
