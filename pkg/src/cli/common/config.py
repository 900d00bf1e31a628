#!/usr/bin/env python3
"""
Layered settings for the coalbranch CLI.

A key is looked up in three layers, first hit wins:

1. the COALBRANCH_<KEY> environment variable
2. the config file: an explicit path, else COALBRANCH_CONFIG_FILE, else
   config.json at the project root
3. BUILTIN_DEFAULTS, which mirror the library constants in
   src/models/config.py
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from src.models import config as defaults

logger = logging.getLogger(__name__)

ENV_PREFIX = "COALBRANCH_"
CONFIG_FILE_ENV = f"{ENV_PREFIX}CONFIG_FILE"

BUILTIN_DEFAULTS: Dict[str, Any] = {
    "default_output_dir": "artifacts",
    "max_threads": defaults.DEFAULT_MAX_THREADS,
    "explosion_cap": defaults.EXPLOSION_CAP,
    "state_cap": defaults.STATE_CAP,
    "zthreshold": defaults.ZTHRESHOLD,
    "default_eps_fraction": defaults.DEFAULT_EPS_FRACTION,
    "default_L_factor": defaults.DEFAULT_L_FACTOR,
}


def find_project_root(markers: Sequence[str] = ("pyproject.toml", ".git", "config.json")) -> Path:
    """
    Nearest ancestor of this file that holds one of the marker entries.

    Falls back to the parent of the src/ package, then to the working
    directory.
    """
    here = Path(__file__).resolve()
    for parent in here.parents:
        found = next((m for m in markers if (parent / m).exists()), None)
        if found:
            logger.debug(f"Project root {parent} (marker '{found}')")
            return parent

    src_dir = next((p for p in here.parents if p.name == "src"), None)
    if src_dir is not None:
        return src_dir.parent
    logger.warning("No project root marker found; using the working directory")
    return Path.cwd()


PROJECT_ROOT = find_project_root()
DEFAULT_CONFIG_FILE = PROJECT_ROOT / "config.json"


def _pick_config_file(explicit: Optional[str]) -> Optional[Path]:
    if explicit:
        return Path(explicit)
    from_env = os.getenv(CONFIG_FILE_ENV)
    if from_env:
        if Path(from_env).exists():
            return Path(from_env)
        logger.warning(f"{CONFIG_FILE_ENV}={from_env} does not exist; ignoring it")
    return DEFAULT_CONFIG_FILE if DEFAULT_CONFIG_FILE.exists() else None


class Config:
    """
    CLI settings. A missing or unreadable config file is not an error:
    every key still resolves from the environment or BUILTIN_DEFAULTS.
    """

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = _pick_config_file(config_file)
        self.config = self._read(self.config_file) if self.config_file else {}

    @staticmethod
    def _read(path: Path) -> Dict[str, Any]:
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except FileNotFoundError:
            logger.warning(f"Config file {path} not found; using defaults")
            return {}
        except (json.JSONDecodeError, OSError) as e:
            logger.error(f"Cannot read config file {path}: {e}; using defaults")
            return {}
        if not isinstance(data, dict):
            logger.error(f"Config file {path} must hold a JSON object; using defaults")
            return {}
        logger.debug(f"Loaded configuration from {path}")
        return data

    def get(self, key: str, default: Any = None) -> Any:
        """Environment, then config file, then default (or the built-in default)."""
        env_value = os.getenv(f"{ENV_PREFIX}{key.upper()}")
        if env_value is not None:
            return env_value
        if key in self.config:
            return self.config[key]
        return default if default is not None else BUILTIN_DEFAULTS.get(key)

    def get_int(self, key: str, default: Optional[int] = None) -> int:
        value = self.get(key, default)
        try:
            return int(float(value))
        except (TypeError, ValueError):
            logger.warning(f"Config value {key}={value!r} is not an integer; using built-in default")
            return int(BUILTIN_DEFAULTS[key])

    def get_float(self, key: str, default: Optional[float] = None) -> float:
        value = self.get(key, default)
        try:
            return float(value)
        except (TypeError, ValueError):
            logger.warning(f"Config value {key}={value!r} is not a number; using built-in default")
            return float(BUILTIN_DEFAULTS[key])

    def thread_count(self) -> int:
        """Worker threads; COALBRANCH_THREADS still wins over max_threads."""
        return defaults.thread_count(self.get_int("max_threads"))


config = Config()
