"""
Run configuration: YAML files, command-line overrides and seed resolution.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .analysis import ZMethod
from .dmft import DmftConfig, Solver

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "DMFTQSIM_SEED"
RESOLVED_CONFIG_NAME = "resolved_config.yaml"


class ConfigError(Exception):
    """Raised for unreadable or invalid configuration."""
    pass


class SweepCombination(BaseModel):
    """One (solver, Z estimator) column of a U sweep."""
    model_config = ConfigDict(extra="forbid")

    solver: Solver = Solver.EXACT_UNITARY
    z_method: ZMethod = ZMethod.SPECTRAL

    @property
    def label(self) -> str:
        return f"{self.solver.value}_{self.z_method.value}"


class RunConfig(DmftConfig):
    """DmftConfig plus output location and per-command settings."""
    out: str = "runs/default"
    command: Optional[str] = None
    u_values: List[float] = Field(default_factory=lambda: [0.0, 2.0, 4.0, 6.5, 7.0, 8.0, 10.0])
    combinations: List[SweepCombination] = Field(default_factory=lambda: [SweepCombination()])
    dt_values: List[float] = Field(default_factory=lambda: [0.5, 0.1, 0.01])
    total_time: float = Field(6.0, gt=0.0)
    emit_references: bool = True
    emit_spectra: bool = True
    emit_circuit_dump: bool = False

    def dmft_config(self, **updates: Any) -> DmftConfig:
        fields = {name: getattr(self, name) for name in DmftConfig.model_fields}
        fields.update(updates)
        return DmftConfig(**fields)


def load_config(config_file: str) -> Dict[str, Any]:
    """
    Load a YAML mapping of configuration keys.

    Args:
        config_file: Path to YAML configuration file

    Raises:
        ConfigError: If the file is missing, malformed or not a mapping
    """
    config_path = Path(config_file)
    if not config_path.exists():
        raise ConfigError(f"Configuration file not found: {config_path}")
    try:
        with open(config_path, "r") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML configuration: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("Configuration must be a mapping of key: value pairs")
    return data


def parse_overrides(overrides: Sequence[str]) -> Dict[str, Any]:
    """key=value pairs; values are parsed as YAML scalars or lists."""
    parsed: Dict[str, Any] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override must look like key=value, got '{item}'")
        key, raw = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"Override has an empty key: '{item}'")
        try:
            parsed[key] = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse value of '{key}': {e}") from e
    return parsed


def _env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{raw}'") from e


def resolve_config(config_file: Optional[str] = None, overrides: Sequence[str] = (),
                   seed: Optional[int] = None, out: Optional[str] = None,
                   command: Optional[str] = None) -> RunConfig:
    """
    Merge file, overrides and flags into a validated RunConfig.

    Seed priority: explicit flag, then the config (file or --set), then the
    DMFTQSIM_SEED environment variable, then 0.
    """
    data = load_config(config_file) if config_file else {}
    data.update(parse_overrides(overrides))
    if seed is not None:
        data["seed"] = seed
    elif "seed" not in data:
        env_seed = _env_seed()
        data["seed"] = env_seed if env_seed is not None else 0
    if out is not None:
        data["out"] = out
    if command is not None:
        data["command"] = command
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration:\n{e}") from e


def write_resolved_config(config: RunConfig, out_dir: Optional[str] = None) -> Path:
    """Echo the effective configuration next to the run's outputs."""
    directory = Path(out_dir or config.out)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_CONFIG_NAME
    with open(path, "w") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=True)
    logger.info(f"Resolved configuration written to {path}")
    return path
