"""
Configuration management for fsskit.
"""
import copy
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from .errors import SpecError

CONFIG_FILENAME = ".fsskit.json"

DEFAULT_CONFIG = {
    "tolerances": {
        "quad_abs": 1e-10,
        "ode_rtol": 1e-10,
        "ode_atol": 1e-12,
        "eps_tail": 1e-9,
        "min_span": 10.0,
        "inverse_check": 1e-8,
        "boundary_slack": 1e-12,
        "degeneracy": 1e-10,
    },
    "kernels": {
        "gl_order": 7,
        "phase_cap": math.pi / 4,
        "h_max": 0.25,
        "grid_size": 64,
        "refine_cells": 5,
    },
    "picard": {
        "eps_fix": 1e-10,
        "max_iter": 200,
        "contraction_limit": 0.5,
        "refine_tol": 1e-8,
        "search_floor": 0.1,
        "search_ceiling": 400.0,
        "search_samples": 12,
        "search_rtol": 0.02,
    },
    "analyticity": {
        "nodes": 64,
        "rtol": 1e-6,
    },
    "output": {
        "directory": "fsskit-out",
        "float_format": "%.12e",
    },
    "logging": {
        "level": "INFO",
        "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    },
}

logger = logging.getLogger("FSSKIT.Config")


def get_logger(component: str) -> logging.Logger:
    """Component logger under the ``FSSKIT`` namespace."""
    return logging.getLogger(f"FSSKIT.{component}")


def get_config_path() -> Path:
    """Get the path to the configuration file."""
    # Check for config in current directory first
    local_config = Path.cwd() / CONFIG_FILENAME
    if local_config.exists():
        return local_config

    home_config = Path.home() / CONFIG_FILENAME
    if home_config.exists():
        return home_config

    # Default to local directory
    return local_config


def merge_config(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Merge ``overrides`` section-by-section into a copy of ``base``."""
    config = copy.deepcopy(base)
    for key, value in overrides.items():
        if key in config and isinstance(config[key], dict) and isinstance(value, dict):
            config[key].update(value)
        else:
            config[key] = value
    return config


def load_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """Load configuration from file or return defaults."""
    config_path = path if path is not None else get_config_path()

    if not config_path.exists():
        return copy.deepcopy(DEFAULT_CONFIG)

    try:
        with open(config_path, "r") as f:
            user_config = json.load(f)
        return merge_config(DEFAULT_CONFIG, user_config)
    except (json.JSONDecodeError, IOError) as e:
        logger.warning(f"Failed to load config from {config_path}: {e}")
        return copy.deepcopy(DEFAULT_CONFIG)


def save_config(config: Dict[str, Any], path: Optional[Path] = None) -> None:
    """Save configuration to file."""
    if path is None:
        path = get_config_path()

    with open(path, "w") as f:
        json.dump(config, f, indent=2, sort_keys=True)


def init_config(path: Optional[Path] = None) -> Path:
    """Initialize a new configuration file with defaults."""
    if path is None:
        path = get_config_path()

    if path.exists():
        raise FileExistsError(
            f"Configuration file already exists at {path}. "
            f"Use 'fsskit-cli config show' to view it or remove the file first."
        )

    save_config(DEFAULT_CONFIG, path)
    return path


def _coerce(raw: Any, current: Any, key: str) -> Any:
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes"):
            return True
        if str(raw).lower() in ("0", "false", "no"):
            return False
        raise SpecError(f"Override {key} expects a boolean, got {raw!r}")
    if isinstance(current, int):
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise SpecError(f"Override {key} expects an integer, got {raw!r}") from None
    if isinstance(current, float):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise SpecError(f"Override {key} expects a number, got {raw!r}") from None
    return raw


def apply_overrides(config: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Apply dotted-key overrides such as ``{"picard.eps_fix": 1e-9}``.

    Args:
        config: Merged configuration
        overrides: Mapping of ``section.key`` to value (strings are coerced)

    Returns:
        New configuration dictionary

    Raises:
        SpecError: If a key is unknown or a value cannot be coerced
    """
    result = copy.deepcopy(config)
    for dotted, raw in overrides.items():
        section, _, key = dotted.partition(".")
        if not key or section not in result or key not in result[section]:
            raise SpecError(f"Unknown tolerance key: {dotted}")
        result[section][key] = _coerce(raw, result[section][key], dotted)
    return result


def parse_override_pairs(pairs: Iterable[str]) -> Dict[str, str]:
    """Parse ``KEY=VAL`` command-line pairs."""
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise SpecError(f"Malformed override (expected KEY=VAL): {pair!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def setup_logging(debug: bool = False, config: Optional[Dict[str, Any]] = None) -> None:
    """Configure root logging from the ``logging`` section."""
    if config is None:
        config = load_config()
    section = config.get("logging", DEFAULT_CONFIG["logging"])
    level = logging.DEBUG if debug else getattr(logging, str(section.get("level", "INFO")).upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format=section.get("format", DEFAULT_CONFIG["logging"]["format"]),
    )
