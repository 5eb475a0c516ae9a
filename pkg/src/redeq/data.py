"""Tabular datasets: independent variables ``x0..x(n-2)`` plus a target ``y``."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["Dataset", "read_csv", "parse_csv", "write_csv"]

ROLES = ("train", "validation", "test", "full")


class Dataset:
    """An immutable ``m x n`` table split into ``X`` (m, n-1) and ``y`` (m,)."""

    __slots__ = ("X", "y", "role", "names")

    def __init__(self, X, y, role="full", names=None):
        X = np.array(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DataError(f"X has shape {X.shape} but y has {y.shape[0]} rows")
        if X.shape[0] < 1:
            raise DataError("a dataset needs at least one row")
        if X.shape[1] < 1:
            raise DataError("a dataset needs at least one independent variable")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset values must be finite")
        if role not in ROLES:
            raise DataError(f"unknown role {role!r}")
        X.flags.writeable = False
        y.flags.writeable = False
        self.X = X
        self.y = y
        self.role = role
        self.names = tuple(names) if names else tuple(f"x{i}" for i in range(X.shape[1]))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_vars(self) -> int:
        return self.X.shape[1]

    @property
    def columns(self):
        return self.names + ("y",)

    def __len__(self):
        return self.n_rows

    def __repr__(self):
        return f"Dataset(rows={self.n_rows}, vars={self.n_vars}, role={self.role!r})"

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.role == other.role
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def take(self, rows, role=None) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], role or self.role, self.names)

    def with_y(self, y) -> "Dataset":
        return Dataset(self.X, y, self.role, self.names)

    def with_role(self, role) -> "Dataset":
        return Dataset(self.X, self.y, role, self.names)

    def table(self) -> np.ndarray:
        return np.column_stack([self.X, self.y])

    @classmethod
    def from_table(cls, table, role="full") -> "Dataset":
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[1] < 2:
            raise DataError("a table needs at least two columns (x0 and y)")
        return cls(table[:, :-1], table[:, -1], role)

    @classmethod
    def concat(cls, parts, role="train") -> "Dataset":
        parts = list(parts)
        return cls(
            np.vstack([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            role,
            parts[0].names,
        )


def read_csv(path, role="full") -> Dataset:
    """Load a CSV file whose header is ``x0,...,x{n-2},y``."""
    return parse_csv(Path(path).read_text(), role)


def parse_csv(text: str, role="full") -> Dataset:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError("empty CSV")
    header = [h.strip() for h in rows[0]]
    expected = [f"x{i}" for i in range(len(header) - 1)] + ["y"]
    if header != expected:
        raise DataError(f"CSV header must be {','.join(expected)}, got {','.join(header)}")
    try:
        values = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"non-numeric CSV cell: {exc}") from None
    if values.size == 0:
        raise DataError("CSV has no data rows")
    if values.shape[1] != len(header):
        raise DataError("ragged CSV rows")
    return Dataset.from_table(values, role)


def write_csv(data: Dataset, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(data.columns)
    for row in data.table():
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
