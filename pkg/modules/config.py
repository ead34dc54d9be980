#!/usr/bin/env python3
"""
Run Configuration
Strict JSON run configuration (unknown keys rejected, every default documented
here) and the process environment read through dotenv.

Defaults: m=0.99 and alpha=0.95 are the best EMA factors of the threshold and
mean-teacher sweeps; warmup_epochs=5, total_epochs=60, batch_size=64, lr=0.1
and hidden=256 are desk-scale choices. The width lets a plain-CE network
memorize the corrupted labels within the run, which the baseline comparison
relies on.
"""

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple, Union

import dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

NOISE_KINDS = ("none", "symmetric", "asymmetric", "openset")


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)


class DataConfig(_StrictModel):
    """Where the train/test splits come from"""

    num_classes: int = 10
    dim: int = 16
    train_per_class: int = 500
    test_per_class: int = 200
    spread: float = 1.0
    center_radius: float = 4.0
    # classes whose cluster spread is multiplied by hard_spread_factor
    hard_classes: Tuple[int, ...] = ()
    hard_spread_factor: float = 2.0
    train_csv: Optional[str] = None
    test_csv: Optional[str] = None

    @field_validator("num_classes")
    @classmethod
    def _check_classes(cls, v: int) -> int:
        if v < 2:
            raise ValueError("num_classes must be >= 2")
        return v

    @field_validator("dim", "train_per_class", "test_per_class")
    @classmethod
    def _check_positive_int(cls, v: int, info) -> int:
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1")
        return v

    @field_validator("spread", "center_radius", "hard_spread_factor")
    @classmethod
    def _check_positive_float(cls, v: float, info) -> float:
        if not v > 0:
            raise ValueError(f"{info.field_name} must be > 0")
        return v

    @model_validator(mode="after")
    def _check_hard_classes(self) -> "DataConfig":
        for c in self.hard_classes:
            if not 0 <= c < self.num_classes:
                raise ValueError(f"hard_classes entries must lie in [0,{self.num_classes})")
        return self


class NoiseConfig(_StrictModel):
    """Label noise injected into the training split"""

    kind: Literal["none", "symmetric", "asymmetric", "openset"] = "symmetric"
    rate: float = 0.4
    open_classes: Tuple[int, ...] = ()

    @field_validator("rate")
    @classmethod
    def _check_rate(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("rate must lie in [0,1]")
        return v


class TrainConfig(_StrictModel):
    """Everything a run depends on; a RunReport is a pure function of it"""

    seed: int = 0
    warmup_epochs: int = 5
    total_epochs: int = 60
    batch_size: int = 64
    lr: float = 0.1
    hidden: int = 256
    m: float = 0.99
    alpha: float = 0.95
    lambda_n: float = 1.0
    lambda_r: float = 1.0
    sigma_floor: float = 1e-3
    checkpoint_every: int = 0

    use_scs: bool = True
    use_scr: bool = True
    use_cr: bool = True
    use_local_thresholds: bool = True
    use_global_thresholds: bool = True
    use_reweighting: bool = True
    use_ema: bool = True
    use_mining: bool = True

    data: DataConfig = DataConfig()
    noise: NoiseConfig = NoiseConfig()

    @field_validator("m", "alpha")
    @classmethod
    def _check_unit_interval(cls, v: float, info) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{info.field_name} must lie in [0,1]")
        return v

    @field_validator("lambda_n", "lambda_r")
    @classmethod
    def _check_nonnegative(cls, v: float, info) -> float:
        if not v >= 0.0:
            raise ValueError(f"{info.field_name} must be >= 0")
        return v

    @field_validator("lr", "sigma_floor")
    @classmethod
    def _check_positive(cls, v: float, info) -> float:
        if not v > 0.0:
            raise ValueError(f"{info.field_name} must be > 0")
        return v

    @field_validator("batch_size", "hidden")
    @classmethod
    def _check_at_least_one(cls, v: int, info) -> int:
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1")
        return v

    @field_validator("total_epochs", "checkpoint_every")
    @classmethod
    def _check_count(cls, v: int, info) -> int:
        if v < 0:
            raise ValueError(f"{info.field_name} must be >= 0")
        return v

    @model_validator(mode="after")
    def _check_cross_fields(self) -> "TrainConfig":
        if not 0 <= self.warmup_epochs <= self.total_epochs:
            raise ValueError("warmup_epochs must lie in [0, total_epochs]")
        if self.noise.kind == "openset":
            k = self.data.num_classes
            open_set = set(self.noise.open_classes)
            if not open_set:
                raise ValueError("noise.open_classes must be non-empty for openset noise")
            if any(not 0 <= c < k for c in open_set):
                raise ValueError(f"noise.open_classes entries must lie in [0,{k})")
            if len(open_set) >= k - 1:
                raise ValueError("noise.open_classes must leave at least two closed classes")
        elif self.noise.open_classes:
            raise ValueError("noise.open_classes is only valid for openset noise")
        return self


def _raise_from_validation(e: ValidationError) -> None:
    err = e.errors()[0]
    key = ".".join(str(p) for p in err.get("loc", ())) or None
    msg = str(err.get("msg", "invalid value"))
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    kind = err.get("type", "")
    if kind == "extra_forbidden":
        raise ConfigError(f"unknown key '{key}'", key=key, constraint="unknown key")
    if kind == "json_invalid":
        raise ConfigError(f"malformed JSON: {msg}", key=None, constraint="malformed JSON")
    if key is None:
        # cross-field validators name their key at the start of the message
        key = msg.split(" ", 1)[0]
        raise ConfigError(msg, key=key, constraint=msg)
    raise ConfigError(f"{key}: {msg}", key=key, constraint=msg)


def config_from_json(text: str) -> TrainConfig:
    """Validate a JSON document into a TrainConfig"""
    try:
        return TrainConfig.model_validate_json(text)
    except ValidationError as e:
        _raise_from_validation(e)
        raise  # unreachable


def config_from_dict(raw: Mapping[str, Any]) -> TrainConfig:
    return config_from_json(json.dumps(raw))


def parse_config(path: Union[str, Path]) -> TrainConfig:
    """
    Parse a run configuration file

    Args:
        path: JSON file with any subset of the TrainConfig keys

    Returns:
        Validated TrainConfig with documented defaults filled in
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", key=None, constraint="file exists")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Error reading config {path}: {str(e)}")
        raise ConfigError(f"cannot read config {path}: {e}") from e
    config = config_from_json(text)
    logger.debug(f"Parsed config {path}")
    return config


def config_to_dict(config: TrainConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")


def _merge(defaults: Dict[str, Any], raw: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(defaults)
    for key, value in raw.items():
        base = defaults.get(key)
        if isinstance(base, dict) and isinstance(value, Mapping):
            merged[key] = _merge(base, value)
        elif isinstance(base, float) and isinstance(value, int) and not isinstance(value, bool):
            merged[key] = float(value)
        elif isinstance(value, tuple):
            merged[key] = list(value)
        else:
            merged[key] = value
    return merged


def canonicalize(raw: Mapping[str, Any]) -> Dict[str, Any]:
    """Fill documented defaults into a raw config mapping without validating it"""
    return _merge(config_to_dict(TrainConfig()), raw)


def merge_overrides(config: TrainConfig, overrides: Mapping[str, Any]) -> TrainConfig:
    """Re-validate a config with (possibly nested) overrides applied"""
    return config_from_dict(_merge(config_to_dict(config), overrides))


@dataclass(frozen=True)
class EnvSettings:
    threads: int = 1
    log_level: str = "INFO"


def load_environment(env_file: Optional[str] = None) -> EnvSettings:
    """Read SEDLAB_* settings, loading a .env file first when present"""
    dotenv.load_dotenv(env_file)
    raw_threads = os.environ.get("SEDLAB_THREADS", "1")
    try:
        threads = int(raw_threads)
    except ValueError:
        raise ConfigError(f"SEDLAB_THREADS must be an integer, got {raw_threads!r}",
                          key="SEDLAB_THREADS", constraint="integer >= 1")
    if threads < 1:
        raise ConfigError("SEDLAB_THREADS must be >= 1", key="SEDLAB_THREADS", constraint="integer >= 1")
    log_level = os.environ.get("SEDLAB_LOG_LEVEL", "INFO").upper()
    return EnvSettings(threads=threads, log_level=log_level)
