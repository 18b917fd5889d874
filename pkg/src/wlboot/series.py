"""Time-series panels, CSV ingestion and log-return transforms."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SeriesMatrix",
    "TransformSpec",
    "SeriesError",
    "load_csv",
    "save_csv",
    "apply_transform",
]

TRANSFORM_KINDS = ("none", "log_return_pct", "log_return")


class SeriesError(ValueError):
    """Raised for malformed input series or invalid transforms."""


@dataclass(frozen=True)
class SeriesMatrix:
    """
    A T x N panel of observations (N = 1 for a univariate series).

    Parameters
    ----------
    values : array_like
        Observations, one row per time point and one column per component.
        A 1-d input is treated as a single component.
    labels : sequence of str, optional
        Component names. Defaults to ``c1 .. cN``.
    """

    values: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise SeriesError(f"values must be a non-empty T x N array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise SeriesError(f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
        values.setflags(write=False)
        labels = tuple(self.labels) if self.labels else tuple(f"c{i + 1}" for i in range(values.shape[1]))
        if len(labels) != values.shape[1]:
            raise SeriesError(f"{len(labels)} labels given for {values.shape[1]} components")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def length_t(self) -> int:
        return self.values.shape[0]

    @property
    def dim_n(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.length_t

    def head(self, n: int) -> "SeriesMatrix":
        """First ``n`` rows."""
        return SeriesMatrix(self.values[:n], self.labels)

    def tail(self, n: int) -> "SeriesMatrix":
        """Last ``n`` rows."""
        return SeriesMatrix(self.values[self.length_t - n :], self.labels)


@dataclass(frozen=True)
class TransformSpec:
    """Which transform to apply; ``kind`` is one of ``none``, ``log_return_pct``, ``log_return``."""

    kind: str = "none"
    description: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in TRANSFORM_KINDS:
            raise SeriesError(f"unknown transform {self.kind!r}; expected one of {TRANSFORM_KINDS}")


def _parse_float(cell: str, row: int, col: int) -> float:
    text = cell.strip()
    if not text:
        raise SeriesError(f"missing value at row {row}, column {col}")
    try:
        value = float(text)
    except ValueError:
        raise SeriesError(f"non-numeric cell {text!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise SeriesError(f"non-finite cell {text!r} at row {row}, column {col}")
    return value


def load_csv(
    path: str | os.PathLike,
    has_header: bool = True,
    time_column: bool = False,
) -> SeriesMatrix:
    """
    Read a comma-separated numeric panel.

    Rows are time points in increasing order and columns are components.
    Row and column numbers in error messages are 1-based and count data rows
    only (the header is not row 1).

    Parameters
    ----------
    path : path-like
        CSV file.
    has_header : bool
        Whether the first line holds component labels.
    time_column : bool
        If True the first column is a timestamp; it must be strictly
        increasing (numeric, or ISO-like strings compared lexically) and is
        dropped.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    labels: list[str] = []
    if has_header and rows:
        labels = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise SeriesError(f"{path}: empty body")
    width = len(rows[0])
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise SeriesError(f"{path}: ragged row {i} has {len(r)} cells, expected {width}")
    if labels and len(labels) != width:
        raise SeriesError(f"{path}: header has {len(labels)} names for {width} columns")
    if time_column:
        stamps = [r[0].strip() for r in rows]
        _check_monotone(stamps, path)
        rows = [r[1:] for r in rows]
        labels = labels[1:]
        width -= 1
        if width < 1:
            raise SeriesError(f"{path}: no data columns after dropping the time column")
    values = np.array(
        [[_parse_float(c, i, j) for j, c in enumerate(r, start=1)] for i, r in enumerate(rows, start=1)]
    )
    return SeriesMatrix(values, tuple(labels))


def _check_monotone(stamps: Sequence[str], path) -> None:
    try:
        keys: list = [float(s) for s in stamps]
    except ValueError:
        keys = list(stamps)
    for i in range(1, len(keys)):
        if not keys[i] > keys[i - 1]:
            raise SeriesError(f"{path}: time column not increasing at row {i + 1}")


def save_csv(series: SeriesMatrix, path: str | os.PathLike, header: bool = True) -> None:
    """Write ``series`` as CSV using ``repr``-exact float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(series.labels)
        for row in series.values:
            writer.writerow([repr(float(v)) for v in row])


def apply_transform(series: SeriesMatrix, spec: TransformSpec) -> SeriesMatrix:
    """
    Apply a level-to-return transform.

    ``log_return_pct`` gives ``100 * ln(y_t / y_{t-1})``, ``log_return`` omits
    the factor 100 and ``none`` returns the input unchanged. Log kinds drop the
    first row, so the output has ``T - 1`` rows.
    """
    if spec.kind == "none":
        return series
    y = series.values
    if series.length_t < 2:
        raise SeriesError("log-return transform needs at least 2 observations")
    if np.any(y <= 0):
        r, c = np.argwhere(y <= 0)[0]
        raise SeriesError(f"non-positive level {y[r, c]} at row {r + 1}, column {c + 1}")
    out = np.diff(np.log(y), axis=0)
    if spec.kind == "log_return_pct":
        out = 100.0 * out
    return SeriesMatrix(out, series.labels)
