"""Dataset representation: CSV ingestion, schema inference, feature
transforms, constant-column pruning, deterministic splitting and sampling.

Datasets are immutable after construction. Every operation returns a new
Dataset; row ids are assigned at ingestion and preserved through filtering
and sampling so dropped rows stay traceable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from tabdistill.errors import DataError, SchemaMismatchError, SerializationError

COLUMN_KINDS = ("bool", "int", "float", "categorical")

SCHEMA_FORMAT = "tabdistill.schema/v1"

# one-hot expansion keeps at most this many explicit categories per column;
# everything else lands in a shared "other" bucket
MAX_ONE_HOT = 64

_BOOL_TOKENS = {"true": True, "false": False, "True": True, "False": False,
                "TRUE": True, "FALSE": False}


@dataclass(frozen=True)
class Column:
    """One column of a schema. ``categories`` maps dense integer codes back
    to the original strings and is present only for categorical columns."""

    name: str
    kind: str
    categories: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise DataError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if (self.kind == "categorical") != (self.categories is not None):
            raise DataError(f"column {self.name!r}: categories <=> kind categorical")


@dataclass(frozen=True)
class Schema:
    """Ordered column layout of a dataset, including the label column.

    Column order is stable and defines feature index order everywhere
    downstream.
    """

    columns: tuple[Column, ...]
    label_column: str

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")
        try:
            label = self.column(self.label_column)
        except KeyError:
            raise DataError(f"label column {self.label_column!r} not in schema") from None
        if label.kind not in ("bool", "int"):
            raise DataError("label column must be of kind bool or int")

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def feature_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.name != self.label_column)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.feature_columns)

    def to_json_dict(self) -> dict:
        return {
            "format": SCHEMA_FORMAT,
            "label_column": self.label_column,
            "columns": [
                {"name": c.name, "kind": c.kind,
                 **({"categories": list(c.categories)} if c.categories is not None else {})}
                for c in self.columns
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Schema":
        if doc.get("format") != SCHEMA_FORMAT:
            raise SerializationError(f"unknown schema format {doc.get('format')!r}")
        cols = tuple(
            Column(d["name"], d["kind"],
                   tuple(d["categories"]) if "categories" in d else None)
            for d in doc["columns"]
        )
        return cls(cols, doc["label_column"])


@dataclass(frozen=True)
class SplitSpec:
    """Train/valid fractions; the remainder is the test split."""

    train_fraction: float
    valid_fraction: float
    seed: int

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0 and 0.0 < self.valid_fraction < 1.0):
            raise DataError("split fractions must lie in (0, 1)")
        if self.train_fraction + self.valid_fraction >= 1.0:
            raise DataError("train_fraction + valid_fraction must be < 1")


@dataclass(frozen=True)
class Dataset:
    """Immutable typed table with a binary label column.

    Feature columns are stored as numpy arrays keyed by position in
    ``schema.feature_columns``: bool columns as bool arrays, int as int64,
    float as float64, categorical as int64 codes into ``Column.categories``.
    """

    schema: Schema
    feature_arrays: tuple[np.ndarray, ...]
    labels: np.ndarray
    row_ids: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if n < 1:
            raise DataError("dataset must contain at least one row")
        for col, arr in zip(self.schema.feature_columns, self.feature_arrays):
            if len(arr) != n:
                raise DataError(f"column {col.name!r} length mismatch")
        if len(self.row_ids) != n:
            raise DataError("row_ids length mismatch")
        if len(np.unique(self.row_ids)) != n:
            raise DataError("row_ids must be unique")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return len(self.feature_arrays)

    def column_values(self, name: str) -> np.ndarray:
        for col, arr in zip(self.schema.feature_columns, self.feature_arrays):
            if col.name == name:
                return arr
        raise KeyError(name)

    def take(self, indices: np.ndarray) -> "Dataset":
        """Positional row selection; row ids travel with their rows."""
        idx = np.asarray(indices)
        return Dataset(
            schema=self.schema,
            feature_arrays=tuple(a[idx] for a in self.feature_arrays),
            labels=self.labels[idx],
            row_ids=self.row_ids[idx],
        )

    def with_schema(self, schema: Schema, feature_arrays: tuple[np.ndarray, ...]) -> "Dataset":
        return Dataset(schema=schema, feature_arrays=feature_arrays,
                       labels=self.labels, row_ids=self.row_ids)


def _infer_kind(values: list[str]) -> str:
    if all(v in _BOOL_TOKENS for v in values):
        return "bool"
    if all(_parse_int(v) is not None for v in values):
        return "int"
    if all(_parse_float(v) is not None for v in values):
        return "float"
    return "categorical"


def _parse_int(s: str) -> Optional[int]:
    t = s.strip()
    if not t:
        return None
    try:
        return int(t)
    except ValueError:
        return None


def _parse_float(s: str) -> Optional[float]:
    t = s.strip()
    if not t:
        return None
    try:
        return float(t)
    except ValueError:
        return None


def _parse_label(raw: str, row: int, column: str) -> int:
    v = raw.strip()
    if v in ("0", "1"):
        return int(v)
    if v in _BOOL_TOKENS:
        return int(_BOOL_TOKENS[v])
    raise DataError(f"row {row}, column {column!r}: label {raw!r} is not 0/1")


def ingest_csv(path: str | Path, label_column: str,
               schema_hint: Optional[Schema] = None) -> Dataset:
    """Read an RFC-4180-style CSV (header mandatory) into a Dataset.

    Without ``schema_hint`` column kinds are inferred: all-true/false ->
    bool, all-integer -> int, numeric with a fractional part -> float,
    anything else -> categorical (values interned to dense integer codes in
    order of first appearance). Cell errors report row and column.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not found "
                        f"(columns: {header})")
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(header)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: row {i + 1} has {len(r)} cells, expected {width}")

    by_name = {name: [r[j] for r in rows] for j, name in enumerate(header)}

    if schema_hint is not None:
        if [c.name for c in schema_hint.columns] != header:
            raise DataError(f"{path}: header does not match schema hint")
        if schema_hint.label_column != label_column:
            raise DataError("schema hint label column disagrees with argument")
        kinds = {c.name: c.kind for c in schema_hint.columns}
    else:
        kinds = {name: _infer_kind(by_name[name])
                 for name in header if name != label_column}
        kinds[label_column] = "int"

    labels = np.array(
        [_parse_label(v, i + 1, label_column) for i, v in enumerate(by_name[label_column])],
        dtype=np.int64,
    )

    columns: list[Column] = []
    arrays: list[np.ndarray] = []
    for name in header:
        if name == label_column:
            columns.append(Column(name, kinds[name]))
            continue
        kind = kinds[name]
        raw = by_name[name]
        if kind == "bool":
            vals = []
            for i, v in enumerate(raw):
                if v not in _BOOL_TOKENS:
                    raise DataError(f"{path}: row {i + 1}, column {name!r}: "
                                    f"{v!r} is not a boolean")
                vals.append(_BOOL_TOKENS[v])
            arrays.append(np.array(vals, dtype=bool))
            columns.append(Column(name, "bool"))
        elif kind == "int":
            vals = []
            for i, v in enumerate(raw):
                parsed = _parse_int(v)
                if parsed is None:
                    raise DataError(f"{path}: row {i + 1}, column {name!r}: "
                                    f"{v!r} is not an integer")
                vals.append(parsed)
            arrays.append(np.array(vals, dtype=np.int64))
            columns.append(Column(name, "int"))
        elif kind == "float":
            vals = []
            for i, v in enumerate(raw):
                parsed = _parse_float(v)
                if parsed is None:
                    raise DataError(f"{path}: row {i + 1}, column {name!r}: "
                                    f"{v!r} is not a number")
                vals.append(parsed)
            arrays.append(np.array(vals, dtype=np.float64))
            columns.append(Column(name, "float"))
        else:  # categorical
            codes: dict[str, int] = {}
            vals = []
            for v in raw:
                if v not in codes:
                    codes[v] = len(codes)
                vals.append(codes[v])
            arrays.append(np.array(vals, dtype=np.int64))
            columns.append(Column(name, "categorical", tuple(codes)))

    schema = Schema(tuple(columns), label_column)
    return Dataset(schema=schema, feature_arrays=tuple(arrays), labels=labels,
                   row_ids=np.arange(len(labels), dtype=np.int64))


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write a Dataset back to CSV; inverse of ingest_csv up to formatting."""
    path = Path(path)
    feature_cols = {c.name: (c, arr) for c, arr in
                    zip(ds.schema.feature_columns, ds.feature_arrays)}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in ds.schema.columns])
        for i in range(ds.n_rows):
            row = []
            for c in ds.schema.columns:
                if c.name == ds.schema.label_column:
                    row.append(str(int(ds.labels[i])))
                    continue
                col, arr = feature_cols[c.name]
                if col.kind == "bool":
                    row.append("true" if arr[i] else "false")
                elif col.kind == "int":
                    row.append(str(int(arr[i])))
                elif col.kind == "float":
                    row.append(repr(float(arr[i])))
                else:
                    row.append(col.categories[int(arr[i])])
            writer.writerow(row)


def remove_constant_columns(ds: Dataset) -> tuple[Dataset, list[str]]:
    """Drop every feature column with fewer than two distinct values.

    The label column is never removed; surviving column order is preserved.
    """
    removed: list[str] = []
    kept_cols: list[Column] = []
    kept_arrays: list[np.ndarray] = []
    for col, arr in zip(ds.schema.feature_columns, ds.feature_arrays):
        if len(np.unique(arr)) < 2:
            removed.append(col.name)
        else:
            kept_cols.append(col)
            kept_arrays.append(arr)
    if not removed:
        return ds, []
    new_columns = tuple(
        c for c in ds.schema.columns
        if c.name == ds.schema.label_column or c.name not in removed
    )
    # re-wrap surviving feature columns in original order
    kept_by_name = {c.name: a for c, a in zip(kept_cols, kept_arrays)}
    schema = Schema(new_columns, ds.schema.label_column)
    arrays = tuple(kept_by_name[c.name] for c in schema.feature_columns)
    return ds.with_schema(schema, arrays), removed


def _midranks_against(fit_sorted: np.ndarray, values: np.ndarray) -> np.ndarray:
    # rank r = #(fit < v) + (#(fit == v) + 1) / 2, the mid-rank convention
    lo = np.searchsorted(fit_sorted, values, side="left")
    hi = np.searchsorted(fit_sorted, values, side="right")
    return lo + (hi - lo + 1) / 2.0


def apply_transform(ds: Dataset, kind: str, fit_rows: Iterable[int]) -> Dataset:
    """Transform all int/float feature columns, fitting statistics on the
    rows whose ids are in ``fit_rows`` and applying them to every row.

    standardize: (x - mean) / std with population std, std=0 replaced by 1.
    quantile: mid-rank empirical CDF r / (n + 1) over the fit values,
    mapping every value into (0, 1).
    """
    if kind not in ("standardize", "quantile"):
        raise DataError(f"unknown transform kind {kind!r}")
    fit_ids = np.asarray(sorted(set(int(r) for r in fit_rows)), dtype=np.int64)
    if len(fit_ids) == 0:
        raise DataError("fit_rows must not be empty")
    fit_mask = np.isin(ds.row_ids, fit_ids)
    if not fit_mask.any():
        raise DataError("fit_rows do not match any dataset row ids")

    new_cols: list[Column] = []
    new_arrays: list[np.ndarray] = []
    for col, arr in zip(ds.schema.feature_columns, ds.feature_arrays):
        if col.kind not in ("int", "float"):
            new_cols.append(col)
            new_arrays.append(arr)
            continue
        x = arr.astype(np.float64)
        fit = x[fit_mask]
        if kind == "standardize":
            mean = fit.mean()
            std = fit.std()  # population std
            if std == 0.0:
                std = 1.0
            out = (x - mean) / std
        else:
            fit_sorted = np.sort(fit)
            n = len(fit_sorted)
            out = _midranks_against(fit_sorted, x) / (n + 1)
        new_cols.append(Column(col.name, "float"))
        new_arrays.append(out)

    columns = tuple(
        next(c for c in new_cols if c.name == orig.name)
        if orig.name != ds.schema.label_column else orig
        for orig in ds.schema.columns
    )
    schema = Schema(columns, ds.schema.label_column)
    arrays = tuple(a for c, a in zip(new_cols, new_arrays))
    return ds.with_schema(schema, arrays)


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic positional (train, valid, test) partition of range(n)."""
    if n < 3:
        raise DataError("need at least 3 rows to split")
    n_train = int(round(n * spec.train_fraction))
    n_valid = int(round(n * spec.valid_fraction))
    n_test = n - n_train - n_valid
    if min(n_train, n_valid, n_test) < 1:
        raise DataError(f"split fractions produce an empty partition "
                        f"(sizes {n_train}/{n_valid}/{n_test})")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return (np.sort(perm[:n_train]),
            np.sort(perm[n_train:n_train + n_valid]),
            np.sort(perm[n_train + n_valid:]))


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Partition into (train, valid, test); exact and deterministic per seed."""
    tr, va, te = split_indices(ds.n_rows, spec)
    return ds.take(tr), ds.take(va), ds.take(te)


def sample_rows(ds: Dataset, n: int, seed: int) -> Dataset:
    """Uniform sample of n rows without replacement, deterministic per seed."""
    if not (1 <= n <= ds.n_rows):
        raise DataError(f"sample size {n} out of range [1, {ds.n_rows}]")
    idx = np.random.default_rng(seed).choice(ds.n_rows, size=n, replace=False)
    return ds.take(np.sort(idx))


@dataclass(frozen=True)
class FeatureEncoder:
    """Maps a Dataset onto the float feature matrix learners consume.

    bool -> {0.0, 1.0}; int/float -> float64; categorical -> one-hot over
    the most frequent categories seen at fit time (capped at MAX_ONE_HOT)
    plus an "other" bucket for everything unseen or beyond the cap.
    Encoders are fit once on training data and stored with the model so
    train and inference rows share one layout.
    """

    column_names: tuple[str, ...]
    column_kinds: tuple[str, ...]
    # per categorical column: the category strings that get their own column
    kept_categories: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def fit(cls, ds: Dataset) -> "FeatureEncoder":
        kept: dict[str, tuple[str, ...]] = {}
        for col, arr in zip(ds.schema.feature_columns, ds.feature_arrays):
            if col.kind != "categorical":
                continue
            counts = np.bincount(arr, minlength=len(col.categories))
            # most frequent first; ties by code order for determinism
            order = np.lexsort((np.arange(len(counts)), -counts))
            top = sorted(order[:MAX_ONE_HOT].tolist())
            kept[col.name] = tuple(col.categories[i] for i in top)
        return cls(
            column_names=ds.schema.feature_names,
            column_kinds=tuple(c.kind for c in ds.schema.feature_columns),
            kept_categories=kept,
        )

    def check_schema(self, ds: Dataset) -> None:
        names = ds.schema.feature_names
        kinds = tuple(c.kind for c in ds.schema.feature_columns)
        if names != self.column_names or kinds != self.column_kinds:
            raise SchemaMismatchError(
                f"rows have columns {list(zip(names, kinds))}, model expects "
                f"{list(zip(self.column_names, self.column_kinds))}")

    def transform(self, ds: Dataset) -> np.ndarray:
        self.check_schema(ds)
        blocks: list[np.ndarray] = []
        for col, arr in zip(ds.schema.feature_columns, ds.feature_arrays):
            if col.kind == "bool":
                blocks.append(arr.astype(np.float64)[:, None])
            elif col.kind in ("int", "float"):
                blocks.append(arr.astype(np.float64)[:, None])
            else:
                kept = self.kept_categories[col.name]
                index = {cat: j for j, cat in enumerate(kept)}
                out = np.zeros((len(arr), len(kept) + 1))
                cols = np.array([index.get(col.categories[code], len(kept))
                                 for code in arr])
                out[np.arange(len(arr)), cols] = 1.0
                blocks.append(out)
        return np.hstack(blocks)

    @property
    def output_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for name, kind in zip(self.column_names, self.column_kinds):
            if kind == "categorical":
                names.extend(f"{name}={cat}" for cat in self.kept_categories[name])
                names.append(f"{name}=<other>")
            else:
                names.append(name)
        return tuple(names)

    def to_json_dict(self) -> dict:
        return {
            "column_names": list(self.column_names),
            "column_kinds": list(self.column_kinds),
            "kept_categories": {k: list(v) for k, v in self.kept_categories.items()},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FeatureEncoder":
        return cls(
            column_names=tuple(doc["column_names"]),
            column_kinds=tuple(doc["column_kinds"]),
            kept_categories={k: tuple(v) for k, v in doc["kept_categories"].items()},
        )


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_json_dict(), indent=2, sort_keys=True))


def load_schema(path: str | Path) -> Schema:
    return Schema.from_json_dict(json.loads(Path(path).read_text()))
