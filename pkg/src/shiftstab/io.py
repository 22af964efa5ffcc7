"""CSV/JSON readers and writers, run manifests and shipped presets."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .core import CostSample, format_real, parse_real
from .errors import InvalidArgumentError

COST_COLUMNS = ("cost", "risk")


class ParseError(InvalidArgumentError):
    """Malformed input file; ``line`` is the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def fmt(x) -> str:
    """Render one CSV cell; floats keep 17 significant digits."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return format_real(x)
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else format_real(x)
    return obj


def to_json(obj) -> str:
    """JSON text with non-finite reals written as the strings "inf"/"nan"."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# cost / risk tables


@dataclass(frozen=True)
class CostTable:
    """Costs read from CSV, with any non-value columns carried through."""

    column: str
    values: np.ndarray
    keys: dict = field(default_factory=dict)  # other column name -> list of strings

    @property
    def sample(self) -> CostSample:
        return CostSample(self.values)


def parse_cost_csv(text: str, column: str | None = None) -> CostTable:
    """Parse a CSV with a ``cost`` (or ``risk``) column.

    A header row is required.  Each value must be a finite real; errors carry
    the offending line number.
    """
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header row", 1)
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if column is None:
        found = [c for c in COST_COLUMNS if c in header]
        if not found:
            raise ParseError("header needs a 'cost' or 'risk' column", 1)
        column = found[0]
    elif column not in header:
        raise ParseError(f"header has no {column!r} column", 1)
    idx = header.index(column)
    others = [(i, h) for i, h in enumerate(header) if i != idx]
    values, keys = [], {h: [] for _, h in others}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
        cell = row[idx].strip()
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"not a number: {cell!r}", lineno) from None
        if not math.isfinite(v):
            raise ParseError(f"{column} must be finite, got {cell!r}", lineno)
        values.append(v)
        for i, h in others:
            keys[h].append(row[i])
    if not values:
        raise ParseError("no data rows", len(lines))
    return CostTable(column, np.asarray(values), keys)


def read_cost_csv(path, column: str | None = None) -> CostTable:
    return parse_cost_csv(Path(path).read_text(encoding="utf-8"), column)


def parse_table(text: str) -> tuple[list, list]:
    """Generic reader for the CSVs this package writes.

    Cells that parse as reals (including "inf") become floats; the rest stay
    strings.  Returns (header, rows).
    """
    reader = csv.reader(text.splitlines())
    header = next(reader)
    rows = []
    for row in reader:
        out = []
        for cell in row:
            try:
                out.append(parse_real(cell))
            except (ValueError, InvalidArgumentError):
                out.append(cell)
        rows.append(out)
    return header, rows


def parse_json(text: str):
    """Inverse of ``to_json``: "inf"/"-inf"/"nan" strings become floats."""

    def back(obj):
        if isinstance(obj, dict):
            return {k: back(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [back(v) for v in obj]
        if obj in ("inf", "-inf", "nan"):
            return float(obj)
        return obj

    return back(json.loads(text))


# --------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class RunManifest:
    command: str
    parameters: dict
    seed: int
    tool_version: str
    outputs: tuple = ()  # (file name, sha256 of contents)

    def digest(self) -> str:
        """sha256 over the canonical JSON of the manifest fields."""
        return hashlib.sha256(self._canonical().encode()).hexdigest()

    def _canonical(self) -> str:
        return json.dumps(self._body(), sort_keys=True, separators=(",", ":"))

    def _body(self):
        return _jsonable({
            "command": self.command,
            "parameters": self.parameters,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "outputs": [{"file": f, "sha256": h} for f, h in self.outputs],
        })

    def to_dict(self):
        return {**self._body(), "hash": self.digest()}


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


# --------------------------------------------------------------------------
# presets


def preset_names() -> list:
    root = resources.files("shiftstab") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("shiftstab") / "presets" / f"{name}.json"
    if not path.is_file():
        raise InvalidArgumentError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_config(ref: str) -> dict:
    """JSON config from a file path, or a shipped preset by name."""
    p = Path(ref)
    if p.is_file():
        try:
            return json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return load_preset(ref)
