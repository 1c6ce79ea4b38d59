"""Typed tabular data: loading, encoding, subsampling and fold assignment."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CONTINUOUS = "continuous"
ORDERED = "ordered"
UNORDERED = "unordered"

_KIND_ALIASES = {
    "continuous": CONTINUOUS,
    "numeric": CONTINUOUS,
    "ordered": ORDERED,
    "ordered-categorical": ORDERED,
    "ordinal": ORDERED,
    "unordered": UNORDERED,
    "unordered-categorical": UNORDERED,
    "categorical": UNORDERED,
    "factor": UNORDERED,
}

MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "N/A", "null", "NULL"})


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise DataError(f"unknown column kind {self.kind!r} for column {self.name!r}")
        object.__setattr__(self, "kind", kind)
        if kind == CONTINUOUS:
            if self.levels is not None:
                raise DataError(f"continuous column {self.name!r} cannot carry levels")
            return
        if not self.levels:
            raise DataError(f"categorical column {self.name!r} needs a non-empty level list")
        levels = tuple(str(v) for v in self.levels)
        if len(set(levels)) != len(levels):
            raise DataError(f"duplicate levels in column {self.name!r}")
        object.__setattr__(self, "levels", levels)

    @property
    def is_categorical(self) -> bool:
        return self.kind != CONTINUOUS

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.levels is not None:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSchema":
        levels = d.get("levels")
        return cls(d["name"], d["kind"], tuple(levels) if levels is not None else None)


class Dataset:
    """Immutable column store with a schema, case weights and an optional response.

    Continuous columns are held as float64 arrays; categorical columns as
    integer codes into ``schema.levels`` (0-based).
    """

    def __init__(self, schema: Sequence[ColumnSchema], columns: dict, response: str | None = None,
                 weights=None):
        schema = tuple(schema)
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        if response is not None and response not in names:
            raise DataError(f"unknown response column {response!r}")
        if not schema:
            raise DataError("dataset has no columns")
        store = {}
        n = None
        for col in schema:
            if col.name not in columns:
                raise DataError(f"missing data for column {col.name!r}")
            arr = np.asarray(columns[col.name])
            arr = arr.astype(np.int64 if col.is_categorical else np.float64, copy=True)
            if col.is_categorical and arr.size and (arr.min() < 0 or arr.max() >= len(col.levels)):
                raise DataError(f"level code out of range in column {col.name!r}")
            if not col.is_categorical and not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite value in column {col.name!r}")
            arr.setflags(write=False)
            store[col.name] = arr
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataError("columns have unequal lengths")
        if n < 1:
            raise DataError("dataset has no rows")
        if weights is None:
            w = np.ones(n)
        else:
            w = np.asarray(weights, dtype=np.float64).copy()
            if w.shape != (n,):
                raise DataError(f"weights must have length {n}")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise DataError("weights must be finite and nonnegative")
        w.setflags(write=False)
        self.schema = schema
        self.response = response
        self.weights = w
        self._columns = store
        self._by_name = {c.name: c for c in schema}

    # -- accessors -----------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.weights.shape[0]

    def __len__(self) -> int:
        return self.n_rows

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    @property
    def predictors(self) -> list[str]:
        return [c.name for c in self.schema if c.name != self.response]

    def column_schema(self, name: str) -> ColumnSchema:
        try:
            return self._by_name[name]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def codes(self, name: str) -> np.ndarray:
        """Raw stored array: floats for continuous columns, level codes otherwise."""
        self.column_schema(name)
        return self._columns[name]

    def numeric(self, name: str) -> np.ndarray:
        """Numeric view: continuous values, 1-based level index for categorical columns."""
        col = self.column_schema(name)
        arr = self._columns[name]
        return arr + 1.0 if col.is_categorical else arr

    def labels(self, name: str) -> np.ndarray:
        col = self.column_schema(name)
        if not col.is_categorical:
            raise DataError(f"column {name!r} is not categorical")
        return np.asarray(col.levels, dtype=object)[self._columns[name]]

    @property
    def y(self) -> np.ndarray:
        """Response as float: binary categorical responses map to 0/1 (second level = 1)."""
        if self.response is None:
            raise DataError("dataset has no response column")
        col = self._by_name[self.response]
        arr = self._columns[self.response]
        if col.is_categorical:
            if len(col.levels) != 2:
                raise DataError(f"categorical response {col.name!r} must have exactly 2 levels")
            return arr.astype(np.float64)
        return arr

    def row(self, i: int) -> dict:
        """Record view of one row, with level labels for categorical columns."""
        out = {}
        for col in self.schema:
            v = self._columns[col.name][i]
            out[col.name] = col.levels[v] if col.is_categorical else float(v)
        return out

    # -- derivation ----------------------------------------------------------

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        cols = {k: v[idx] for k, v in self._columns.items()}
        return Dataset(self.schema, cols, self.response, self.weights[idx])

    def with_column(self, name: str, values) -> "Dataset":
        """Copy with one column's stored values (floats or level codes) replaced."""
        self.column_schema(name)
        cols = dict(self._columns)
        cols[name] = np.broadcast_to(np.asarray(values), (self.n_rows,))
        return Dataset(self.schema, cols, self.response, self.weights)

    def with_response(self, values) -> "Dataset":
        """Copy with the (continuous) response column replaced."""
        if self.response is None:
            raise DataError("dataset has no response column")
        cols = dict(self._columns)
        values = np.asarray(values, dtype=np.float64)
        schema = [ColumnSchema(c.name, CONTINUOUS) if c.name == self.response else c
                  for c in self.schema]
        cols[self.response] = values
        return Dataset(schema, cols, self.response, self.weights)

    def to_csv(self, path, float_format=repr):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.names)
            arrays = [self._columns[c.name] for c in self.schema]
            for i in range(self.n_rows):
                writer.writerow([
                    c.levels[a[i]] if c.is_categorical else float_format(float(a[i]))
                    for c, a in zip(self.schema, arrays)
                ])

    def __repr__(self):
        return f"Dataset(N={self.n_rows}, columns={self.names}, response={self.response!r})"


def _parse_float(cell: str):
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_schema(path) -> list[ColumnSchema]:
    with open(path, encoding="utf-8") as fh:
        return [ColumnSchema.from_dict(d) for d in json.load(fh)]


def load_csv(path, response: str | None = None, schema_hint: Iterable[ColumnSchema] | None = None,
             weights: str | None = None) -> Dataset:
    """Read a header-first CSV file into a typed :class:`Dataset`.

    Columns named in ``schema_hint`` are typed accordingly; the rest are
    continuous when every cell parses as a finite number and unordered
    categorical (sorted observed levels) otherwise. ``weights`` names a column
    holding case weights; it is removed from the predictors.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"empty file: {path}")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if not body:
        raise DataError(f"no data rows in {path}")
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    if response is not None and response not in header:
        raise DataError(f"unknown response column {response!r}")
    if weights is not None and weights not in header:
        raise DataError(f"unknown weights column {weights!r}")
    hints = {c.name: c for c in (schema_hint or [])}

    cells = {name: [] for name in header}
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"row {i} has {len(row)} fields, expected {len(header)}")
        for name, cell in zip(header, row):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                raise DataError(f"missing value at row {i}, column {name}")
            cells[name].append(cell)

    schema, columns = [], {}
    w = None
    for name in header:
        vals = cells[name]
        if name == weights:
            parsed = [_parse_float(v) for v in vals]
            if any(p is None for p in parsed):
                raise DataError(f"weights column {name!r} must be numeric")
            w = np.array(parsed)
            continue
        hint = hints.get(name)
        if hint is None:
            parsed = [_parse_float(v) for v in vals]
            if all(p is not None for p in parsed):
                hint = ColumnSchema(name, CONTINUOUS)
            else:
                hint = ColumnSchema(name, UNORDERED, tuple(sorted(set(vals))))
        if hint.is_categorical:
            index = {lvl: k for k, lvl in enumerate(hint.levels)}
            codes = []
            for i, v in enumerate(vals, start=1):
                if v not in index:
                    raise DataError(f"unseen level {v!r} at row {i}, column {name}")
                codes.append(index[v])
            columns[name] = np.array(codes, dtype=np.int64)
        else:
            parsed = [_parse_float(v) for v in vals]
            for i, p in enumerate(parsed, start=1):
                if p is None:
                    raise DataError(f"non-numeric value {vals[i - 1]!r} at row {i}, column {name}")
            columns[name] = np.array(parsed, dtype=np.float64)
        schema.append(hint)
    return Dataset(schema, columns, response, w)


def from_arrays(X, y=None, names=None, response="y", weights=None) -> Dataset:
    """Build an all-continuous dataset from a 2-D array and optional response."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("X must be 2-dimensional")
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    schema = [ColumnSchema(n, CONTINUOUS) for n in names]
    cols = {n: X[:, j] for j, n in enumerate(names)}
    if y is None:
        return Dataset(schema, cols, None, weights)
    schema.append(ColumnSchema(response, CONTINUOUS))
    cols[response] = np.asarray(y, dtype=np.float64)
    return Dataset(schema, cols, response, weights)


# -- sampling ----------------------------------------------------------------

def subsample(n: int, sampfrac, weights=None, rng=None) -> np.ndarray:
    """Row indices for one tree.

    ``sampfrac < 1`` draws ``round(sampfrac * n)`` distinct rows without
    replacement, with probability proportional to ``weights``;
    ``sampfrac == 1`` draws ``n`` rows with replacement (bootstrap);
    ``sampfrac == "all"`` returns every row once, in order.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    if isinstance(sampfrac, str):
        if sampfrac == "all":
            return np.arange(n)
        raise DataError(f"unknown sampler {sampfrac!r}")
    if not 0 < sampfrac <= 1:
        raise DataError(f"sampfrac must lie in (0, 1], got {sampfrac}")
    rng = np.random.default_rng(rng)
    p = None
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
            raise DataError("weights must be nonnegative with positive sum")
        p = w / w.sum()
    if sampfrac == 1:
        return rng.choice(n, size=n, replace=True, p=p)
    size = max(1, int(math.floor(sampfrac * n + 0.5)))
    if p is not None and np.count_nonzero(p) < size:
        raise DataError("fewer positive-weight rows than the requested subsample size")
    return rng.choice(n, size=size, replace=False, p=p)


@dataclass(frozen=True)
class FoldAssignment:
    fold_of_row: np.ndarray
    k: int
    stratified: bool

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of_row, minlength=self.k + 1)[1:]


def split_folds(n_or_data, k: int, stratify: bool = False, rng=None, y=None) -> FoldAssignment:
    """Assign rows to ``k`` folds (labelled 1..k) with sizes differing by at most one.

    With ``stratify`` the binary response is dealt out positives first, then
    negatives, continuing the same round-robin, so per-fold positive counts
    also differ by at most one.
    """
    if isinstance(n_or_data, Dataset):
        n = n_or_data.n_rows
        if stratify and y is None:
            y = n_or_data.y
    else:
        n = int(n_or_data)
    if k < 2 or k > n:
        raise DataError(f"fold count must satisfy 2 <= k <= N (k={k}, N={n})")
    rng = np.random.default_rng(rng)
    if stratify:
        if y is None:
            raise DataError("stratified folds need a response")
        y = np.asarray(y)
        pos = np.flatnonzero(y == 1)
        neg = np.flatnonzero(y != 1)
        order = np.concatenate([rng.permutation(pos), rng.permutation(neg)])
    else:
        order = rng.permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[order] = np.arange(n) % k + 1
    fold.setflags(write=False)
    return FoldAssignment(fold, k, bool(stratify))
