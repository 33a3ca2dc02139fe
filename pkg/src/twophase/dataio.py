"""Datasets, CSV input/output, normalization and k-fold splits."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    FormatError,
    InsufficientDataError,
    ParameterError,
    ShapeError,
)
from .numeric import Rng, as_matrix

SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class Dataset:
    """``n`` observations of ``m`` signals, optionally labelled (1 = anomaly)."""

    x: np.ndarray
    labels: np.ndarray | None = None
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        object.__setattr__(self, "x", x)
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ShapeError(f"{len(names)} column names for {x.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ConfigError("column names must be unique")
        object.__setattr__(self, "column_names", names)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if labels.shape[0] != x.shape[0]:
                raise ShapeError(f"{labels.shape[0]} labels for {x.shape[0]} rows")
            if not np.all((labels == 0) | (labels == 1)):
                raise ParameterError("labels must be 0 or 1")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> Dataset:
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.x[idx], labels, self.column_names)

    def fingerprint(self) -> str:
        """SHA-256 of the values, labels and column names."""
        h = hashlib.sha256()
        h.update("\x1f".join(self.column_names).encode())
        h.update(np.ascontiguousarray(self.x, dtype="<f8").tobytes())
        if self.labels is not None:
            h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()


def concat(*parts: Dataset) -> Dataset:
    names = parts[0].column_names
    if any(p.column_names != names for p in parts):
        raise ConfigError("cannot concatenate datasets with different columns")
    x = np.vstack([p.x for p in parts])
    labels = np.concatenate(
        [p.labels if p.labels is not None else np.zeros(p.n, np.int64) for p in parts]
    )
    return Dataset(x, labels, names)


def load_csv(path, label_column: str | None = None) -> Dataset:
    """Read a headed CSV into a :class:`Dataset`.

    Raises:
        FormatError: a cell does not parse, with its 1-based row/column.
        ConfigError: ``label_column`` is not in the header.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file, header row expected") from None
        if label_column is not None and label_column not in header:
            raise ConfigError(f"{path}: label column {label_column!r} not in header")
        lab = header.index(label_column) if label_column is not None else None
        rows, labels = [], []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"{path}: row {r} has {len(row)} cells, header has {len(header)}"
                )
            values = []
            for c, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise FormatError(
                        f"{path}: row {r}, column {c + 1} ({header[c]!r}): "
                        f"cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise FormatError(
                        f"{path}: row {r}, column {c + 1} ({header[c]!r}): non-finite value"
                    )
                if c == lab:
                    if v not in (0.0, 1.0):
                        raise FormatError(
                            f"{path}: row {r}, label column: expected 0 or 1, got {cell!r}"
                        )
                    labels.append(int(v))
                else:
                    values.append(v)
            rows.append(values)
    names = [h for i, h in enumerate(header) if i != lab]
    x = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(x, labels if lab is not None else None, tuple(names))


def save_csv(ds: Dataset, path, label_column: str = "label") -> None:
    """Write ``ds`` with shortest round-trip float formatting (``repr``)."""
    header = list(ds.column_names)
    if ds.labels is not None:
        if label_column in header:
            raise ConfigError(f"label column {label_column!r} clashes with a signal name")
        header.append(label_column)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.x[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            w.writerow(row)


@dataclass(frozen=True)
class Normalizer:
    """Per-column z-scoring fitted on a training split."""

    mean: np.ndarray
    scale: np.ndarray

    @property
    def m(self) -> int:
        return self.mean.shape[0]

    def apply(self, x) -> np.ndarray:
        x = self._check(x)
        return (x - self.mean) / self.scale

    def invert(self, x) -> np.ndarray:
        x = self._check(x)
        return x * self.scale + self.mean

    def _check(self, x) -> np.ndarray:
        x = as_matrix(x)
        if x.shape[1] != self.m:
            raise ShapeError(f"normalizer fitted on {self.m} columns, got {x.shape[1]}")
        return x


def fit_normalizer(train) -> Normalizer:
    """Column means and population standard deviations of ``train``.

    Standard deviations below 1e-8 (constant signals) are replaced by 1.0.
    """
    x = train.x if isinstance(train, Dataset) else as_matrix(train)
    if x.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 rows to normalize, got {x.shape[0]}")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    scale = np.where(std < SCALE_FLOOR, 1.0, std)
    return Normalizer(mean, scale)


def apply(norm: Normalizer, x) -> np.ndarray:
    return norm.apply(x)


def invert(norm: Normalizer, x) -> np.ndarray:
    return norm.invert(x)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """``(train_idx, validation_idx)`` for one fold."""
        val = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, val

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def kfold(n: int, k: int, rng: Rng | int) -> FoldPlan:
    """Shuffled, balanced assignment of ``n`` indices to ``k`` folds."""
    if k < 2 or k > n:
        raise ParameterError(f"need 2 <= k <= n, got k={k}, n={n}")
    if not isinstance(rng, Rng):
        rng = Rng(rng)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(k, assignments)
