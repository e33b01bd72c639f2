"""Result containers shared by the geometry and probe modules, plus CSV helpers."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence


def _fmt(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return repr(value)
        return repr(value)
    return value


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    """Write a list of dict rows to CSV with a stable column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows, columns))
    return path


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


@dataclass
class FitReport:
    """Constants of a feasibility fit together with the sampled evidence.

    ``max_violation`` is the largest value of ``log(lhs) - log(bound)`` over the
    sampled points; feasibility fits keep it at or below zero.
    """

    name: str
    constants: dict[str, float]
    max_violation: float
    table: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.max_violation <= 1e-12

    def summary_row(self) -> dict:
        row = {"name": self.name, "max_violation": self.max_violation}
        row.update(self.constants)
        row["flags"] = ";".join(self.flags)
        return row

    def to_csv(self, path: str | Path) -> Path:
        return write_csv(path, self.table)

    def summary_csv(self, path: str | Path) -> Path:
        return write_csv(path, [self.summary_row()])


def field_rows(values: Iterable[float], **extra) -> list[dict]:
    """Vertex-value rows for serialising a scalar field."""
    rows = []
    for i, v in enumerate(values):
        row = {"vertex": i, "value": float(v)}
        row.update(extra)
        rows.append(row)
    return rows
