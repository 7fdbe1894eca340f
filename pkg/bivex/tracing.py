"""Simple tracing utility: prints to console and appends to a log file.

Provides trace_print which mirrors the built-in print signature for
convenience but also writes the output to the file named by environment
variable `BIVEX_LOG`. Numerical diagnostics (quadrature warnings,
precision-loss flags, collapsed importance weights) go through here with
log_only=True so sweeps stay quiet on the console.
"""

from __future__ import annotations

import dataclasses
import enum
import os
import pprint
from datetime import datetime, timezone
from typing import Any

DEFAULT_LOG_FILE = "bivex_log.txt"

_SILENT = False


def set_silent(silent: bool) -> None:
    """Set tracer silent mode.

    When silent is True, trace_print will only append to the log file and
    will not print to stdout.
    """
    global _SILENT
    _SILENT = bool(silent)


def log_file_path() -> str:
    """Absolute path of the trace log, resolved against the current directory."""
    name = os.environ.get("BIVEX_LOG") or DEFAULT_LOG_FILE
    return os.path.join(os.getcwd(), name)


def trace_print(*args: Any, sep: str = " ", end: str = "\n", flush: bool = False, log_only: bool = False) -> None:
    message = sep.join(str(a) for a in args) + end

    if not _SILENT and not log_only:
        print(*args, sep=sep, end=end, flush=flush)

    try:
        timestamp = datetime.now(timezone.utc).isoformat()
        if timestamp.endswith("+00:00"):
            timestamp = timestamp[:-6] + "Z"
        with open(log_file_path(), "a", encoding="utf-8") as f:
            f.write(f"[{timestamp}] {message}")
    except Exception:
        # Never raise from the tracer; logging should be best-effort.
        pass


def _plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_plain(v) for v in obj)
    return obj


def log_result(result: Any, label: str | None = None) -> None:
    """Append a structured dump of a result object to the log file only."""
    try:
        if label:
            trace_print(label, log_only=True)
        plain = _plain(result)
        if isinstance(plain, dict):
            trace_print(f"Result is {type(result).__name__} with keys: {list(plain.keys())}", log_only=True)
        trace_print(pprint.pformat(plain), log_only=True)
    except Exception as dbg_err:
        trace_print(f"Failed to print result structure: {dbg_err}", log_only=True)


__all__ = ["trace_print", "set_silent", "log_result", "log_file_path"]
