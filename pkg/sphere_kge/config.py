"""
Configuration Module

Run configuration with defaults, desk-scale presets, flat ``KEY=value``
config files and command-line overrides (flags > file > preset > defaults).
"""

import dataclasses
import logging
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values

from .exceptions import ConfigError
from .models import ModelKind
from .trainer import TrainConfig

logger = logging.getLogger(__name__)

TRUE_VALUES = {"1", "true", "yes", "on"}
FALSE_VALUES = {"0", "false", "no", "off"}

PRESETS: Dict[str, Dict[str, Any]] = {
    "codex-s": {"dim": 100, "epochs": 400},
    "codex-m": {"dim": 100, "epochs": 200},
    "fb15k-237": {"dim": 100, "epochs": 200},
}


def _default_output_dir() -> str:
    return os.getenv("SPHERE_KGE_OUTDIR", "./runs")


@dataclass
class RunConfig:
    """Every setting of a command; only the dataset location has no usable default."""

    data_dir: Optional[str] = None
    train_file: str = "train.txt"
    valid_file: str = "valid.txt"
    test_file: str = "test.txt"
    names_file: Optional[str] = None
    model: str = ModelKind.SKGE.value
    dim: int = 100
    margin: float = 6.0
    lr: float = 5e-4
    batch_size: int = 1024
    epochs: int = 1000
    negatives: int = 1
    eval_every: int = 50
    patience: int = 5
    seed: int = 0
    radius: float = 1.0
    delta: float = 1e-4
    epsilon: float = 1e-9
    scale: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    transe_normalize_entities: bool = True
    filtered_negatives: bool = False
    record_timing: bool = False
    threads: int = 1
    output_dir: str = field(default_factory=_default_output_dir)
    checkpoint: Optional[str] = None

    @property
    def kind(self) -> ModelKind:
        return ModelKind.parse(self.model)

    def train_config(self) -> TrainConfig:
        """Training settings carried by this run."""
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        return TrainConfig(**{name: getattr(self, name) for name in names})

    def to_flat(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def require_data(self) -> str:
        if not self.data_dir:
            raise ConfigError("data_dir", self.data_dir, "a dataset directory is required (--data)")
        return self.data_dir


def _field_types() -> Dict[str, Any]:
    return typing.get_type_hints(RunConfig)


def coerce_value(key: str, value: Any) -> Any:
    """Convert a raw (usually string) value to the type of the RunConfig field ``key``."""
    types = _field_types()
    if key not in types:
        raise ConfigError(key, value, "unknown key")
    target = types[key]
    optional = typing.get_origin(target) is typing.Union and type(None) in typing.get_args(target)
    if optional:
        target = next(arg for arg in typing.get_args(target) if arg is not type(None))

    if value is None or (isinstance(value, str) and value.strip() == ""):
        if optional:
            return None
        raise ConfigError(key, value, "a value is required")

    if isinstance(value, str):
        value = value.strip()
    try:
        if target is bool:
            if isinstance(value, bool):
                return value
            text = str(value).lower()
            if text in TRUE_VALUES:
                return True
            if text in FALSE_VALUES:
                return False
            raise ValueError(value)
        if target is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if target is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(key, value, f"expected {target.__name__}") from None


def read_config_file(path) -> Dict[str, Any]:
    """
    Read a flat ``KEY=value`` file.

    Keys are case-insensitive; dashes and underscores are interchangeable.

    Raises:
        ConfigError: If the file is missing, a key is unknown or a value does not parse
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", str(path), "file not found")

    values = {}
    for raw_key, raw_value in dotenv_values(path).items():
        key = raw_key.strip().lower().replace("-", "_")
        values[key] = coerce_value(key, raw_value)
    logger.debug(f"Read {len(values)} setting(s) from {path}")
    return values


def resolve_config(config_file=None, overrides: Optional[Mapping[str, Any]] = None,
                   preset: Optional[str] = None) -> RunConfig:
    """
    Merge defaults, an optional preset, an optional config file and flag overrides.

    ``None`` overrides mean "flag not given" and are skipped.

    Returns:
        Fully resolved configuration
    """
    merged: Dict[str, Any] = {}
    if preset:
        key = preset.strip().lower()
        if key not in PRESETS:
            raise ConfigError("preset", preset, f"expected one of {', '.join(PRESETS)}")
        merged.update(PRESETS[key])
    if config_file:
        merged.update(read_config_file(config_file))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = coerce_value(key, value)

    config = RunConfig(**merged)
    try:
        ModelKind.parse(config.model)
    except ValueError as e:
        raise ConfigError("model", config.model, str(e)) from None
    try:
        config.train_config()
    except ValueError as e:
        raise ConfigError("train", None, str(e)) from None
    return config
