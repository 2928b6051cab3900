"""Feature-table ingestion: CSV loading, one-hot encoding, standardization,
and pool splits.

A `Schema` maps columns to roles (numeric feature, categorical feature,
label).  Categorical columns expand to one-hot blocks in lexicographic
category order so encodings are stable across platforms and runs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from gpal.boucwen import FEATURE_COLUMNS, LABEL_COLUMN
from gpal.selectors import Pool

__all__ = [
    "Schema",
    "SchemaError",
    "Dataset",
    "StandardizeTransform",
    "Split",
    "SDOF_SCHEMA",
    "load_csv",
    "standardize",
    "make_split",
]


class SchemaError(ValueError):
    """Ingestion failure, located by row/column where applicable."""


@dataclass(frozen=True)
class Schema:
    """Column roles for a feature/label table.

    `categories`, when given for a categorical column, pins the admissible
    values; otherwise categories are discovered from the data.  `id_column`
    names an optional stable-identifier column.
    """

    numeric: tuple[str, ...]
    categorical: tuple[str, ...] = ()
    labels: tuple[str, ...] = ()
    id_column: str | None = None
    categories: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "numeric", tuple(self.numeric))
        object.__setattr__(self, "categorical", tuple(self.categorical))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not (self.numeric or self.categorical):
            raise SchemaError("schema needs at least one feature column")
        if not self.labels:
            raise SchemaError("schema needs at least one label column")
        overlap = set(self.numeric) & set(self.categorical)
        if overlap:
            raise SchemaError(f"columns cannot be both numeric and categorical: {overlap}")

    @classmethod
    def from_file(cls, path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            numeric=tuple(raw.get("numeric", ())),
            categorical=tuple(raw.get("categorical", ())),
            labels=tuple(raw.get("labels", ())),
            id_column=raw.get("id"),
            categories={k: tuple(v) for k, v in raw.get("categories", {}).items()},
        )


SDOF_SCHEMA = Schema(numeric=FEATURE_COLUMNS, labels=(LABEL_COLUMN,))


@dataclass(frozen=True)
class Dataset:
    """Encoded table: numeric features plus expanded one-hot blocks."""

    features: np.ndarray
    feature_names: tuple[str, ...]
    labels: dict
    ids: tuple[str, ...]

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def pool(self, label: str | None = None) -> Pool:
        """Pool over this table; `label` picks which label column to expose."""
        if label is None:
            if len(self.labels) != 1:
                raise ValueError(f"pick one of the labels: {sorted(self.labels)}")
            label = next(iter(self.labels))
        if label not in self.labels:
            raise KeyError(f"unknown label column {label!r}")
        return Pool(features=self.features, labels=self.labels[label], ids=self.ids)


def _parse_float(raw: str, row: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise SchemaError(f"row {row}, column {column!r}: cannot parse {raw!r}") from None
    if not math.isfinite(value):
        raise SchemaError(f"row {row}, column {column!r}: non-finite value {raw!r}")
    return value


def load_csv(path, schema: Schema) -> Dataset:
    """Load and encode a CSV per the schema.

    Rows are numbered from 1 (the line after the header) in error messages.
    Missing cells, unparseable numbers, and categories outside a pinned set
    are rejected with row/column coordinates.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)

    col_index = {name: i for i, name in enumerate(header)}
    needed = list(schema.numeric) + list(schema.categorical) + list(schema.labels)
    if schema.id_column:
        needed.append(schema.id_column)
    missing = [c for c in needed if c not in col_index]
    if missing:
        raise SchemaError(f"{path}: header is missing columns {missing}")

    def cell(row_values, row_no, column):
        value = row_values[col_index[column]].strip()
        if value == "":
            raise SchemaError(f"row {row_no}, column {column!r}: missing value")
        return value

    n = len(rows)
    if n == 0:
        raise SchemaError(f"{path}: no data rows")

    numeric = np.empty((n, len(schema.numeric)))
    raw_cats = {c: [] for c in schema.categorical}
    labels = {c: np.empty(n) for c in schema.labels}
    ids = []
    for r, values in enumerate(rows, start=1):
        if len(values) != len(header):
            raise SchemaError(f"row {r}: expected {len(header)} cells, got {len(values)}")
        for j, column in enumerate(schema.numeric):
            numeric[r - 1, j] = _parse_float(cell(values, r, column), r, column)
        for column in schema.categorical:
            raw_cats[column].append(cell(values, r, column))
        for column in schema.labels:
            labels[column][r - 1] = _parse_float(cell(values, r, column), r, column)
        ids.append(cell(values, r, schema.id_column) if schema.id_column else str(r - 1))

    blocks = [numeric]
    names = list(schema.numeric)
    for column in schema.categorical:
        seen = raw_cats[column]
        cats = schema.categories.get(column) or tuple(sorted(set(seen)))
        lookup = {c: k for k, c in enumerate(cats)}
        block = np.zeros((n, len(cats)))
        for r, value in enumerate(seen, start=1):
            if value not in lookup:
                raise SchemaError(
                    f"row {r}, column {column!r}: unknown category {value!r} "
                    f"(expected one of {list(cats)})"
                )
            block[r - 1, lookup[value]] = 1.0
        blocks.append(block)
        names.extend(f"{column}={c}" for c in cats)

    return Dataset(
        features=np.hstack(blocks),
        feature_names=tuple(names),
        labels=labels,
        ids=tuple(ids),
    )


@dataclass(frozen=True)
class StandardizeTransform:
    """Invertible shift/scale for features and labels (population sd).

    Constant columns keep sd 1 so the transform stays invertible; their
    standardized values are 0.
    """

    feature_mean: np.ndarray
    feature_sd: np.ndarray
    label_mean: float
    label_sd: float

    def apply_features(self, X):
        return (np.asarray(X, dtype=float) - self.feature_mean) / self.feature_sd

    def invert_features(self, X):
        return np.asarray(X, dtype=float) * self.feature_sd + self.feature_mean

    def apply_labels(self, y):
        return (np.asarray(y, dtype=float) - self.label_mean) / self.label_sd

    def invert_labels(self, y):
        return np.asarray(y, dtype=float) * self.label_sd + self.label_mean


def _population_stats(values, axis=0):
    mean = np.mean(values, axis=axis)
    sd = np.std(values, axis=axis)
    sd = np.where(sd > 0, sd, 1.0) if np.ndim(sd) else (sd if sd > 0 else 1.0)
    return mean, sd


def standardize(pool: Pool) -> tuple[Pool, StandardizeTransform]:
    """Shift/scale every feature column and the label to mean 0, sd 1."""
    f_mean, f_sd = _population_stats(pool.features)
    if pool.labels is not None:
        l_mean, l_sd = _population_stats(pool.labels)
    else:
        l_mean, l_sd = 0.0, 1.0
    transform = StandardizeTransform(f_mean, f_sd, float(l_mean), float(l_sd))
    new = Pool(
        features=transform.apply_features(pool.features),
        labels=None if pool.labels is None else transform.apply_labels(pool.labels),
        ids=pool.ids,
    )
    return new, transform


@dataclass(frozen=True)
class Split:
    """Random subset of pool rows used as the working pool of a realization.

    Scoring follows the transductive convention: observed points predict
    with their true labels.
    """

    pool_indices: np.ndarray
    seed: int
    transductive: bool = True

    def apply(self, pool: Pool) -> Pool:
        idx = self.pool_indices
        return Pool(
            features=pool.features[idx],
            labels=None if pool.labels is None else pool.labels[idx],
            ids=tuple(pool.ids[i] for i in idx),
        )


def make_split(pool: Pool, fraction: float = 0.8, seed: int = 0) -> Split:
    """Uniform sample without replacement of round(fraction * n) rows."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    n = pool.size
    k = round(fraction * n)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    idx = np.sort(rng.choice(n, size=k, replace=False))
    return Split(pool_indices=idx, seed=seed)
