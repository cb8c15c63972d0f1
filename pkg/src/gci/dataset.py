"""Immutable column-named sample matrices and their CSV form.

CSV dialect: comma separated, one header row of column names, '.' decimal
floats, LF line endings.  Floats are written with repr (shortest exact
round-trip) so that identical arrays serialize byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, UnknownVariableError

__all__ = ["Dataset"]


@dataclass(frozen=True)
class Dataset:
    """N x p real matrix with unique column names and no missing values."""

    columns: tuple[str, ...]
    values: np.ndarray

    def __init__(self, columns: Sequence[str], values: np.ndarray):
        cols = tuple(str(c) for c in columns)
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 2:
            raise ContractError("values must be a 2-D matrix")
        if arr.shape[0] < 1:
            raise ContractError("dataset needs at least one row")
        if arr.shape[1] != len(cols):
            raise ContractError(
                f"{len(cols)} column names for {arr.shape[1]} columns"
            )
        if len(set(cols)) != len(cols):
            raise ContractError("duplicate column names")
        if not np.all(np.isfinite(arr)):
            raise ContractError("dataset contains non-finite entries")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "values", arr)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise UnknownVariableError(f"no column {name!r}") from None
        return self.values[:, j]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Columns stacked in the requested order (read-only view copy)."""
        return np.column_stack([self.column(n) for n in names]) if names else np.empty((self.n_rows, 0))

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset by integer indices or boolean mask."""
        return Dataset(self.columns, self.values[np.asarray(rows)])

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    def to_csv_text(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.values:
            lines.append(",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        text = Path(path).read_text(encoding="utf-8")
        return cls.from_csv_text(text)

    @classmethod
    def from_csv_text(cls, text: str) -> "Dataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ContractError("empty CSV")
        header = lines[0].split(",")
        rows = [[float(tok) for tok in ln.split(",")] for ln in lines[1:]]
        return cls(header, np.array(rows, dtype=float))

    @classmethod
    def from_columns(cls, cols: dict[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> "Dataset":
        items = list(cols.items()) if isinstance(cols, dict) else list(cols)
        names = [k for k, _ in items]
        return cls(names, np.column_stack([np.asarray(v, dtype=float) for _, v in items]))
