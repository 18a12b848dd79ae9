from __future__ import annotations

import csv
import json
import math
import os
import textwrap
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from nonlocalreg.exceptions import ConfigError
from nonlocalreg.kinds import ReportFormat

RECORD_FIELDS = ("check", "inputs", "lhs", "rhs", "margin", "pass")


@dataclass
class Record:
    check: str
    inputs: Dict[str, Any]
    lhs: Optional[float]
    rhs: Optional[float]
    margin: Optional[float]
    passed: bool

    @property
    def full_text(self) -> str:
        """One human-readable line for the console summary."""
        status = "ok  " if self.passed else "FAIL"
        args = ", ".join(f"{k}={_plain(v)}" for k, v in sorted(self.inputs.items()))
        parts = [f"{status} {self.check}({args})"]
        if self.lhs is not None:
            parts.append(f"lhs={self.lhs:.6g}")
        if self.rhs is not None:
            parts.append(f"rhs={self.rhs:.6g}")
        if self.margin is not None:
            parts.append(f"margin={self.margin:.3g}")
        return " ".join(parts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check": self.check,
            "inputs": {k: _jsonable(v) for k, v in self.inputs.items()},
            "lhs": _jsonable(self.lhs),
            "rhs": _jsonable(self.rhs),
            "margin": _jsonable(self.margin),
            "pass": bool(self.passed),
        }


def _plain(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


def check(name: str, lhs: float, rhs: float, slack: float = 0.0, **inputs) -> Record:
    """Record for the inequality lhs <= rhs with relative slack."""
    scale = abs(rhs) if rhs != 0 else 1.0
    margin = (rhs - lhs) / scale
    return Record(name, inputs, lhs, rhs, margin, bool(margin >= -slack))


class RecordLog:
    def __init__(self, engine=None) -> None:
        self.records: List[Record] = []
        self.engine = engine

    def add_record(self, record: Record) -> None:
        self.records.append(record)

    def extend(self, records: Iterable[Record]) -> None:
        for record in records:
            self.add_record(record)

    @property
    def failures(self) -> List[Record]:
        return [r for r in self.records if not r.passed]

    @property
    def pass_counts(self) -> Dict[str, int]:
        return {"passed": len(self.records) - len(self.failures), "failed": len(self.failures)}

    def render(self, stream: TextIO, width: int = 100, only_failures: bool = False) -> None:
        """Write the log, one wrapped entry per record."""
        for record in self.records:
            if only_failures and record.passed:
                continue
            for line in self.wrap(record.full_text, width):
                stream.write(line + "\n")

    @staticmethod
    def wrap(string: str, width: int) -> Iterable[str]:
        """Return a wrapped text message."""
        for line in string.splitlines():
            yield from textwrap.wrap(line, width, expand_tabs=True, subsequent_indent="    ")


def format_number(value: float) -> str:
    """17 significant digits: lossless for doubles."""
    return format(float(value), ".17g")


def _open_for_write(path: str):
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def emit_report(records: Sequence[Record], path: str, fmt: ReportFormat = ReportFormat.JSON) -> str:
    """Write check records as JSON lines or CSV; returns the path written."""
    with _open_for_write(path) as f:
        if fmt is ReportFormat.JSON:
            for record in records:
                f.write(json.dumps(record.to_dict(), sort_keys=True, allow_nan=False) + "\n")
        else:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(RECORD_FIELDS)
            for record in records:
                row = record.to_dict()
                writer.writerow([
                    row["check"],
                    json.dumps(row["inputs"], sort_keys=True),
                    *("" if row[k] is None else (format_number(row[k]) if isinstance(row[k], float) else row[k])
                      for k in ("lhs", "rhs", "margin")),
                    "true" if row["pass"] else "false",
                ])
    return path


def write_table(path: str, header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    """Numeric CSV (profiles, solutions) with 17 significant digits."""
    with _open_for_write(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_solution_csv(path: str, nodes: np.ndarray, values: np.ndarray) -> str:
    d = nodes.shape[1]
    header = [f"x{k}" for k in range(d)] + ["value"]
    rows = (tuple(float(c) for c in node) + (float(v),) for node, v in zip(nodes, values))
    return write_table(path, header, rows)


def read_solution_csv(path: str) -> Tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    d = len(header) - 1
    data = np.array(rows, dtype=float).reshape(-1, d + 1)
    return data[:, :d], data[:, d]


def write_profile_csv(path: str, radii: Sequence[float], osc: Sequence[float]) -> str:
    rows = ((k, float(r), float(o)) for k, (r, o) in enumerate(zip(radii, osc)))
    return write_table(path, ("k", "radius", "osc"), rows)
