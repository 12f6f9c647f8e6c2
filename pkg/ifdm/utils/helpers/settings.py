"""
Settings helper shims.

Centralizes access to process-wide settings that come from the environment
(via the root `config.py`) rather than from a run configuration file.
"""

from __future__ import annotations

from config import Config, config_by_name

_active = Config


def use_config(config_name: str) -> None:
    """Select the settings class for this process."""
    global _active
    _active = config_by_name.get(config_name, Config)


def get_setting(key: str, default=None):
    return getattr(_active, key, default)


def get_workers() -> int:
    """Return the FFT worker cap (IFDM_THREADS), never below one."""
    return max(1, int(get_setting("THREADS", 1)))
