"""Delimited report files: header comments, writers and their parsers."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

from .rng import stable_hash

__all__ = [
    "config_hash",
    "header_comment",
    "write_csv",
    "read_csv",
    "write_json",
    "format_joules",
]


def config_hash(config: dict) -> str:
    return stable_hash(json.dumps(config, sort_keys=True, default=str))


def header_comment(command: str, config: dict, master_seed=None) -> str:
    parts = [f"wattlab {command}", f"config_hash={config_hash(config)}"]
    if master_seed is not None:
        parts.append(f"master_seed={master_seed}")
    return " ".join(parts)


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], comment: str = "") -> str:
    buf = io.StringIO()
    for line in comment.splitlines():
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _convert(value: str):
    if value == "":
        return None
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def read_csv(path_or_text) -> tuple[list[str], list[dict]]:
    """Columns and rows of a file written by :func:`write_csv` (comments skipped)."""
    text = path_or_text if "\n" in str(path_or_text) else Path(path_or_text).read_text("utf-8")
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    rows = [dict(zip(columns, (_convert(v) for v in row))) for row in reader]
    return columns, rows


def write_json(path, payload) -> str:
    text = json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


_PREFIXES = [(1e6, "MJ"), (1e3, "kJ"), (1.0, "J"), (1e-3, "mJ"), (1e-6, "uJ"), (1e-9, "nJ"), (1e-12, "pJ")]


def format_joules(value: float) -> str:
    if value == 0:
        return "0 J"
    for scale, unit in _PREFIXES:
        if abs(value) >= scale:
            return f"{value / scale:.4g} {unit}"
    return f"{value:.3e} J"
