"""
Configuration management for t1track
"""

import copy
import os
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from ..errors import ConfigError

DEFAULT_CONFIG_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))),
    "config", "config.yaml"
)


def load_yaml(path: str) -> Dict[str, Any]:
    """Load a YAML mapping from disk; empty files give an empty mapping"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")

    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f)

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping at top level")
    return data


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """
    Recursively merge two mappings without mutating either

    Args:
        base: Lower-precedence mapping
        override: Higher-precedence mapping; nested dicts merge, everything else replaces

    Returns:
        Merged mapping
    """
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class Config:
    """Configuration manager for t1track defaults"""

    def __init__(self, config_path: str = DEFAULT_CONFIG_PATH):
        """
        Initialize configuration manager

        Args:
            config_path: Path to YAML configuration file
        """
        load_dotenv()

        self.config_path = config_path
        self.config_data = load_yaml(config_path)

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value by dot-notation key

        Args:
            key: Configuration key in dot notation (e.g., "estimator.prior.k")
            default: Default value if key not found

        Returns:
            Configuration value
        """
        value: Any = self.config_data
        for k in key.split('.'):
            if isinstance(value, dict):
                value = value.get(k)
            else:
                return default

        return value if value is not None else default

    @property
    def output_dir(self) -> str:
        """Get default output directory"""
        return os.getenv('T1_OUTPUT_DIR', self.get('output.base_path', './results'))

    @property
    def log_level(self) -> str:
        """Get log level name"""
        return os.getenv('T1_LOG_LEVEL', self.get('logging.level', 'INFO'))

    @property
    def log_dir(self) -> str:
        """Get directory for per-run log files"""
        return os.getenv('T1_LOG_DIR', self.get('logging.dir', './logs'))

    @property
    def max_workers(self) -> int:
        """Get worker-thread count for fan-out"""
        raw = os.getenv('T1_MAX_WORKERS', self.get('runtime.max_workers', 1))
        try:
            workers = int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"T1_MAX_WORKERS must be an integer, got {raw!r}")
        if workers < 1:
            raise ConfigError(f"max_workers must be >= 1, got {workers}")
        return workers


_config_instance: Optional[Config] = None


def get_config(config_path: str = DEFAULT_CONFIG_PATH) -> Config:
    """
    Get global configuration instance

    Args:
        config_path: Path to configuration file

    Returns:
        Config instance
    """
    global _config_instance
    if _config_instance is None or _config_instance.config_path != config_path:
        _config_instance = Config(config_path)
    return _config_instance
