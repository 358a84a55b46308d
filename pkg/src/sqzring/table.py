"""Result tables, their CSV/JSON encodings and the worker pool."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import __version__
from .config import RunConfig, serialize_config

COLUMN_TYPES = ("float", "db", "int", "bool", "str")
WORKERS_ENV = "SQZRING_WORKERS"


@dataclass(frozen=True)
class Column:
    name: str
    type: str = "float"

    def __post_init__(self):
        if self.type not in COLUMN_TYPES:
            raise ValueError(f"unknown column type {self.type!r}")

    def encode(self, value) -> str:
        if self.type == "bool":
            return "true" if value else "false"
        if self.type == "str":
            return "" if value is None else str(value)
        if self.type == "int":
            return str(int(value))
        v = float(value)
        if math.isnan(v):
            return "nan"
        if self.type == "db":
            return f"{v:.4f}"
        return repr(v)

    def json_value(self, value):
        if self.type == "bool":
            return bool(value)
        if self.type == "str":
            return value
        if self.type == "int":
            return int(value)
        v = float(value)
        if not math.isfinite(v):
            return None
        return round(v, 4) if self.type == "db" else v


@dataclass(frozen=True)
class ResultTable:
    """Rows in a fixed column schema, plus provenance metadata."""

    columns: tuple[Column, ...]
    rows: tuple[tuple, ...]
    metadata: dict = field(default_factory=dict, compare=False)
    sidecars: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row length does not match the column schema")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> list:
        i = self.names.index(name)
        return [row[i] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.names)
        for row in self.rows:
            writer.writerow([c.encode(v) for c, v in zip(self.columns, row)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "metadata": self.metadata,
            "schema": [{"name": c.name, "type": c.type} for c in self.columns],
            "rows": [[c.json_value(v) for c, v in zip(self.columns, row)] for row in self.rows],
        }
        return json.dumps(doc, indent=1, sort_keys=False, allow_nan=False) + "\n"


def provenance(config: RunConfig, command: str, **extra) -> dict:
    text = serialize_config(config)
    meta = {
        "command": command,
        "tool": "sqzring",
        "version": __version__,
        "config": text,
        "config_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        "defaults_applied": list(config.defaults),
    }
    meta.update(extra)
    meta["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return meta


def write_table(table: ResultTable, path: str | Path, fmt: str = "csv") -> list[Path]:
    """Write ``table``; CSV gets a ``.meta.json`` sidecar with the metadata.

    Extra sidecars (e.g. contours) go to ``<stem>.<name>.json``.
    """
    path = Path(path)
    written = []
    if fmt == "csv":
        path.write_text(table.to_csv(), encoding="utf-8", newline="")
        meta = path.with_name(path.name + ".meta.json")
        meta.write_text(json.dumps(table.metadata, indent=1) + "\n", encoding="utf-8")
        written += [path, meta]
    elif fmt == "json":
        path.write_text(table.to_json(), encoding="utf-8")
        written.append(path)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    for name, payload in table.sidecars.items():
        side = path.with_name(f"{path.stem}.{name}.json")
        side.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
        written.append(side)
    return written


def resolve_workers(requested: int | None = None) -> int:
    """Explicit request, else ``SQZRING_WORKERS``, else the CPU count."""
    if requested is None:
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        else:
            requested = os.cpu_count() or 1
    if requested < 1:
        raise ValueError(f"worker count must be at least 1, got {requested}")
    return requested


def parallel_map(fn: Callable[[Any], Any], items: Sequence, workers: int = 1) -> list:
    """``[fn(x) for x in items]`` across a process pool; order is preserved."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def check_writable(path: str | Path) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise OSError(f"output directory {parent} is not writable")


def flatten(groups: Iterable[Iterable[tuple]]) -> tuple[tuple, ...]:
    return tuple(row for group in groups for row in group)
