"""Output formatting helpers for bivex.

This module normalizes the values that appear in report rows (floats,
numpy scalars, enums, tuples, None) into plain scalars, and renders rows
as CSV or as a JSON array with a stable column order.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
import sys
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

CSV = "csv"
JSON = "json"
FORMATS = (CSV, JSON)


def format_float(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def normalize_value(value: Any) -> Any:
    """Normalize a row value into a CSV/JSON friendly scalar.

    Handles:
    - None (empty string)
    - bools and ints (unchanged)
    - floats and numpy floating scalars (finite kept, non-finite as strings)
    - enums (their value)
    - tuples/lists (joined with ';')
    """
    if value is None:
        return ""
    if isinstance(value, enum.Enum):
        return normalize_value(value.value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return x if math.isfinite(x) else format_float(x)
    if isinstance(value, (list, tuple)):
        parts = []
        for item in value:
            t = normalize_value(item)
            parts.append(format_float(t) if isinstance(t, float) else str(t))
        return ";".join(parts)
    return str(value)


def _csv_cell(value: Any) -> str:
    value = normalize_value(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def render_rows(rows: Iterable[Mapping[str, Any]], columns: Sequence[str], fmt: str = CSV) -> str:
    """Render rows in the given column order. Missing keys become empty cells."""
    rows = list(rows)
    if fmt == CSV:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == JSON:
        payload = [{c: normalize_value(row.get(c)) for c in columns} for row in rows]
        return json.dumps(payload, indent=2) + "\n"
    raise ValueError(f"Unsupported output format: {fmt}. Use 'csv' or 'json'")


def write_rows(
    rows: Iterable[Mapping[str, Any]],
    columns: Sequence[str],
    fmt: str = CSV,
    out_path: Optional[str] = None,
) -> str:
    """Render rows and write them to out_path, or to stdout when out_path is None.

    Parent directories of out_path are created if needed. Returns the
    rendered text.
    """
    text = render_rows(rows, columns, fmt)
    if out_path:
        dir_name = os.path.dirname(out_path)
        if dir_name:
            os.makedirs(dir_name, exist_ok=True)
        with open(out_path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()
    return text


__all__ = ["normalize_value", "format_float", "render_rows", "write_rows", "CSV", "JSON", "FORMATS"]
