"""In-memory table model, CSV ingestion, masks, and detection metrics.

Every cell is a raw string; a missing value is the empty string. Tables and
masks are immutable after construction, so they are safe to share across
threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TableError(ValueError):
    """Malformed table input (ragged rows, duplicate attributes, ...)."""


@dataclass(frozen=True)
class Dataset:
    """A table of raw string cells with named attributes."""

    name: str
    attributes: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    _attr_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.attributes) == 0:
            raise TableError("dataset needs at least one attribute")
        if len(self.rows) == 0:
            raise TableError("dataset needs at least one row")
        if any(a == "" for a in self.attributes):
            raise TableError("attribute names must be non-empty")
        if len(set(self.attributes)) != len(self.attributes):
            raise TableError("attribute names must be unique")
        width = len(self.attributes)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise TableError(
                    f"row {i} has {len(row)} cells, expected {width}"
                )
        object.__setattr__(
            self, "_attr_index", {a: j for j, a in enumerate(self.attributes)}
        )

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_attrs(self) -> int:
        return len(self.attributes)

    def cell(self, i: int, j: int) -> str:
        return self.rows[i][j]

    def attr_index(self, name: str) -> int:
        try:
            return self._attr_index[name]
        except KeyError:
            raise KeyError(f"unknown attribute {name!r}") from None

    def column(self, j: int) -> tuple[str, ...]:
        return tuple(row[j] for row in self.rows)

    def row_dict(self, i: int) -> dict[str, str]:
        return dict(zip(self.attributes, self.rows[i]))

    def replace_cell(self, i: int, j: int, value: str) -> "Dataset":
        """Return a copy with one cell changed (used by error injection)."""
        rows = list(self.rows)
        row = list(rows[i])
        row[j] = value
        rows[i] = tuple(row)
        return Dataset(self.name, self.attributes, tuple(rows))


def load_csv(path: str | Path, has_header: bool = True, name: str | None = None) -> Dataset:
    """Load an RFC-4180 CSV file into a Dataset, cells kept verbatim.

    Without a header, attributes are synthesized as col0..colM-1.
    Ragged rows and duplicate header names raise TableError.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        records = [tuple(r) for r in reader]
    if not records:
        raise TableError(f"{path}: empty CSV")
    if has_header:
        attributes = records[0]
        body = records[1:]
    else:
        attributes = tuple(f"col{j}" for j in range(len(records[0])))
        body = records
    if not body:
        raise TableError(f"{path}: no data rows")
    return Dataset(name or path.stem, tuple(attributes), tuple(body))


def write_csv(ds: Dataset, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.attributes)
        writer.writerows(ds.rows)


def serialize_tuple(ds: Dataset, i: int, attrs: list[str] | None = None) -> str:
    """Render row i as ``name: value, name: value`` over the chosen attributes.

    Empty cells render as an empty value after the colon. Attribute order in
    `attrs` is preserved.
    """
    if attrs is None:
        attrs = list(ds.attributes)
    parts = []
    for a in attrs:
        j = ds.attr_index(a)
        parts.append(f"{a}: {ds.cell(i, j)}")
    return ", ".join(parts)


@dataclass(frozen=True)
class CellMask:
    """Boolean grid over a dataset; True marks a positive (erroneous) cell."""

    attributes: tuple[str, ...]
    bits: np.ndarray  # bool, shape (N, M)

    def __post_init__(self) -> None:
        if self.bits.ndim != 2 or self.bits.shape[1] != len(self.attributes):
            raise TableError("mask shape does not match attribute count")
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=bool))
        self.bits.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.attributes)
            for row in self.bits:
                writer.writerow(["1" if b else "0" for b in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "CellMask":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            records = list(reader)
        if len(records) < 2:
            raise TableError(f"{path}: mask CSV needs a header and rows")
        attributes = tuple(records[0])
        bits = np.array(
            [[cell == "1" for cell in row] for row in records[1:]], dtype=bool
        )
        return cls(attributes, bits)


def _check_same_shape(a_attrs, a_shape, b_attrs, b_shape) -> None:
    if a_attrs != b_attrs or a_shape != b_shape:
        raise TableError(
            f"shape mismatch: {a_shape} {a_attrs!r} vs {b_shape} {b_attrs!r}"
        )


def diff_mask(dirty: Dataset, truth: Dataset) -> CellMask:
    """Cell-wise exact string comparison: True where dirty differs from truth."""
    _check_same_shape(
        dirty.attributes, (dirty.n_rows, dirty.n_attrs),
        truth.attributes, (truth.n_rows, truth.n_attrs),
    )
    bits = np.array(
        [
            [dirty.cell(i, j) != truth.cell(i, j) for j in range(dirty.n_attrs)]
            for i in range(dirty.n_rows)
        ],
        dtype=bool,
    )
    return CellMask(dirty.attributes, bits)


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
                "tp": self.tp,
                "fp": self.fp,
                "fn": self.fn,
                "tn": self.tn,
            },
            sort_keys=True,
        )


def evaluate_detection(pred: CellMask, truth: CellMask) -> EvalReport:
    """Precision/recall/F1 of a predicted mask against the truth mask.

    Zero denominators yield 0, except the degenerate all-clean case (truth has
    no positives and neither does the prediction), which scores perfect.
    """
    _check_same_shape(pred.attributes, pred.shape, truth.attributes, truth.shape)
    p, t = pred.bits, truth.bits
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    tn = int(np.sum(~p & ~t))
    if tp + fn == 0 and tp + fp == 0:
        return EvalReport(1.0, 1.0, 1.0, tp, fp, fn, tn)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return EvalReport(precision, recall, f1, tp, fp, fn, tn)
