"""Configuration management."""

from .manager import ConfigManager, RunConfig, canonical_json, config_hash, from_dict, parse_override

__all__ = ["ConfigManager", "RunConfig", "canonical_json", "config_hash", "from_dict", "parse_override"]
