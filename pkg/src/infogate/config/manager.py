"""Configuration management for InfoGate."""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

from ..errors import ValidationError
from ..gating.gates import GateConfig
from ..nets.networks import NetConfig
from ..trainer.loop import TrainConfig
from ..trainer.probes import ProbeConfig
from ..worldgen.dataset import POLICIES
from ..worldgen.env import EnvConfig

ENV_PREFIX = "INFOGATE_"
# Fields that only move files around; they never change results.
UNHASHED_FIELDS = ("outdir", "log_level", "paths")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class DataConfig:
    episodes: int = 60
    eval_episodes: int = 20
    horizon_cap: int = 5
    policy: str = "eps_expert"
    epsilon: float = 0.5
    eval_mode: bool = False
    workers: int = 1


@dataclass
class SweepConfig:
    lambdas: Tuple[float, ...] = (0.01, 0.1, 1.0, 10.0)
    seeds: Tuple[int, ...] = (0, 1, 2)


@dataclass
class PathsConfig:
    dataset: str = ""
    eval_dataset: str = ""
    expert_dataset: str = ""
    params: str = ""


@dataclass
class RunConfig:
    seed: int = 0
    outdir: str = "workspace/output"
    log_level: str = "INFO"
    env: EnvConfig = field(default_factory=EnvConfig)
    data: DataConfig = field(default_factory=DataConfig)
    nets: NetConfig = field(default_factory=NetConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


def _coerce(current: Any, value: Any, key: str) -> Any:
    if isinstance(value, list):
        value = tuple(value)
    if current is None or value is None:
        return value
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ValidationError(f"Configuration field '{key}' expects true/false, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ValidationError(f"Configuration field '{key}' expects an integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"Configuration field '{key}' expects a number, got {value!r}")
        return float(value)
    if isinstance(current, str) and not isinstance(value, str):
        raise ValidationError(f"Configuration field '{key}' expects a string, got {value!r}")
    return value


def merge_dict(config, data: Dict[str, Any], prefix: str = ""):
    """Return a copy of dataclass ``config`` with ``data`` merged in, recursively."""
    if not isinstance(data, dict):
        raise ValidationError(f"Configuration section '{prefix.rstrip('.') or '<root>'}' must be an object")
    names = {f.name for f in dataclasses.fields(config)}
    updates = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if key not in names:
            raise ValidationError(f"Unknown configuration field '{dotted}'")
        current = getattr(config, key)
        if dataclasses.is_dataclass(current):
            updates[key] = merge_dict(current, value, prefix=f"{dotted}.")
        else:
            updates[key] = _coerce(current, value, dotted)
    return dataclasses.replace(config, **updates)


def to_dict(config: RunConfig) -> Dict[str, Any]:
    return dataclasses.asdict(config)


def from_dict(data: Dict[str, Any]) -> RunConfig:
    return merge_dict(RunConfig(), data)


def canonical_json(config: RunConfig, exclude: Iterable[str] = ()) -> str:
    data = {k: v for k, v in to_dict(config).items() if k not in set(exclude)}
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    """First 12 hex digits of SHA-256 over the result-affecting configuration."""
    return hashlib.sha256(canonical_json(config, UNHASHED_FIELDS).encode("utf-8")).hexdigest()[:12]


def parse_override(text: str) -> Tuple[str, Any]:
    """Split ``section.key=value``; the value is read as JSON when it parses."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ValidationError(f"Override '{text}' must look like section.key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _nest(dotted: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in dotted.items():
        node = nested
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(f"Override '{key}' conflicts with another override")
        node[parts[-1]] = value
    return nested


class ConfigManager:
    """Manages configuration loading and validation for InfoGate.

    Sources, lowest precedence first: built-in defaults, the JSON config file,
    ``INFOGATE_*`` environment variables (a ``.env`` file is loaded by the CLI),
    then command-line overrides.
    """

    def __init__(self, config_file: Optional[str] = None):
        """Initialize configuration manager.

        Args:
            config_file: Path to a JSON configuration file, or None for defaults
        """
        self.config_file = config_file

    def load_config(self) -> RunConfig:
        """Load configuration from file and environment.

        Returns:
            The merged RunConfig

        Raises:
            FileNotFoundError: If the configuration file is not found
            ValidationError: If the file is not valid JSON or names unknown fields
        """
        config = RunConfig()
        if self.config_file:
            path = Path(self.config_file)
            if not path.exists():
                raise FileNotFoundError(f"Configuration file {self.config_file} not found")
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ValidationError(f"Configuration file {self.config_file} is unreadable: {exc}") from exc
            config = merge_dict(config, data)
        return self.apply_environment(config)

    def apply_environment(self, config: RunConfig) -> RunConfig:
        overrides: Dict[str, Any] = {}
        if os.getenv(f"{ENV_PREFIX}SEED"):
            overrides["seed"] = parse_override(f"seed={os.environ[f'{ENV_PREFIX}SEED']}")[1]
        if os.getenv(f"{ENV_PREFIX}OUTDIR"):
            overrides["outdir"] = os.environ[f"{ENV_PREFIX}OUTDIR"]
        if os.getenv(f"{ENV_PREFIX}LOG_LEVEL"):
            overrides["log_level"] = os.environ[f"{ENV_PREFIX}LOG_LEVEL"].upper()
        return merge_dict(config, overrides) if overrides else config

    def apply_overrides(self, config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
        """Apply dotted-key overrides such as ``{"gate.warmup": 100}``."""
        return merge_dict(config, _nest(overrides)) if overrides else config

    def validate_config(self, config: RunConfig) -> bool:
        """Validate configuration values.

        Returns:
            True if configuration is valid

        Raises:
            ValidationError: If configuration is invalid
        """
        config.env.validate()
        config.gate.validate()
        config.train.validate(config.gate)
        config.probe.validate()

        expected = (config.env.channels, config.env.height, config.env.width)
        if tuple(config.nets.obs_shape) != expected:
            raise ValidationError(f"nets.obs_shape {tuple(config.nets.obs_shape)} does not match the environment "
                                  f"{expected}")
        if config.nets.n_actions != config.env.n_actions:
            raise ValidationError(f"nets.n_actions must be {config.env.n_actions}, got {config.nets.n_actions}")

        data = config.data
        if data.episodes < 1 or data.eval_episodes < 1:
            raise ValidationError("data.episodes and data.eval_episodes must be >= 1")
        if not 1 <= data.horizon_cap < config.env.episode_length:
            raise ValidationError(f"data.horizon_cap must satisfy 1 <= K < {config.env.episode_length}, "
                                  f"got {data.horizon_cap}")
        if data.policy not in POLICIES:
            raise ValidationError(f"Unknown data.policy '{data.policy}' (expected one of {', '.join(POLICIES)})")
        if data.workers < 1:
            raise ValidationError(f"data.workers must be >= 1, got {data.workers}")
        if config.log_level not in LOG_LEVELS:
            raise ValidationError(f"log_level must be one of {', '.join(LOG_LEVELS)}, got '{config.log_level}'")
        if not config.outdir:
            raise ValidationError("Required configuration field 'outdir' is missing or empty")
        return True
