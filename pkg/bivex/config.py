"""Configuration loading.

Config files are flat `key = value` text. Values may reference environment
variables through `{{VARNAME}}` placeholders, which are substituted when the
file is read. A missing variable is an error, not an empty string.
"""

from __future__ import annotations

import os
import re
from typing import Dict, Match, Optional

_PLACEHOLDER = re.compile(r"\{\{([A-Z0-9_]+)\}\}")


def substitute_env(text: str, source: str = "config") -> str:
    """Replace {{VARNAME}} placeholders with environment variable values."""

    def _replace(match: Match[str]) -> str:
        var = match.group(1)
        val = os.getenv(var)
        if val is None:
            raise ValueError(f"Environment variable '{var}' referenced in {source} is not set")
        return val

    return _PLACEHOLDER.sub(_replace, text)


def load_config_file(path: str) -> Dict[str, str]:
    """Load a flat key-value config file into a dict of raw string values.

    Keys are lower-cased and dashes become underscores so `log-n`, `LOG_N`
    and `log_n` all address the same setting. Later lines override earlier
    ones.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except FileNotFoundError:
        raise ValueError(f"Config file '{path}' was not found")

    text = substitute_env(text, source=f"config file '{path}'")

    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower().replace("-", "_")
        if not key:
            raise ValueError(f"{path}:{lineno}: empty key")
        values[key] = value.strip()
    return values


def resolve_workers(explicit: Optional[int] = None) -> int:
    """Worker count: explicit value, else BIVEX_THREADS, else the CPU count."""
    if explicit is not None:
        if int(explicit) < 1:
            raise ValueError("worker count must be at least 1")
        return int(explicit)

    env = os.getenv("BIVEX_THREADS")
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise ValueError(f"BIVEX_THREADS must be a positive integer, got {env!r}")
        if workers < 1:
            raise ValueError(f"BIVEX_THREADS must be a positive integer, got {env!r}")
        return workers

    return os.cpu_count() or 1


__all__ = ["load_config_file", "substitute_env", "resolve_workers"]
