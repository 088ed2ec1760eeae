"""Columnar tables, schemas and dataset statistics.

A :class:`DataTable` stores one float64 array per numeric column and one
int32 code array per categorical column.  Categorical levels are interned in
first-appearance order when a CSV is loaded and the level list is inherited
unchanged by every derived table (row selection, perturbation, resampling),
so code values stay comparable across a whole experiment.

Tables are immutable: the backing arrays are marked read-only and transforms
return new tables.  ``content_hash`` gives a stable fingerprint used to stamp
models and reports with the exact data they saw.

Quantiles use linear interpolation between order statistics: for sorted
values x[0..n-1] and probability p, let h = (n - 1) * p; the quantile is
x[floor(h)] + (h - floor(h)) * (x[floor(h) + 1] - x[floor(h)]).
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError

__all__ = [
    "ColumnKind",
    "ColumnSpec",
    "Schema",
    "Column",
    "DataTable",
    "LoadResult",
    "MissingPolicy",
    "HistogramData",
    "load_schema",
    "save_schema",
    "load_csv",
    "save_csv",
    "group_counts",
    "group_mean",
    "quantiles",
    "histogram",
]


class ColumnKind(enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class MissingPolicy(enum.Enum):
    """What to do with rows whose schema cells are missing or unparseable."""

    DROP_ROW = "drop_row"
    FAIL = "fail"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: ColumnKind
    scale: float | None = None  # numeric only: multiply raw values at load


@dataclass(frozen=True)
class Schema:
    columns: tuple[ColumnSpec, ...]
    target: str
    protected: tuple[str, ...] = ()

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        if self.target not in names:
            raise SchemaError(f"target column {self.target!r} not in schema")
        for p in self.protected:
            if p not in names:
                raise SchemaError(f"protected column {p!r} not in schema")
        for c in self.columns:
            if c.scale is not None:
                if c.kind is not ColumnKind.NUMERIC:
                    raise SchemaError(f"scale on non-numeric column {c.name!r}")
                if not (c.scale > 0):
                    raise SchemaError(f"scale on {c.name!r} must be positive")

    def spec(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"no column named {name!r}")


def load_schema(path: str | Path) -> Schema:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read schema {path}: {exc}") from exc
    try:
        cols = tuple(
            ColumnSpec(
                name=c["name"],
                kind=ColumnKind(c["kind"]),
                scale=c.get("scale"),
            )
            for c in raw["columns"]
        )
        return Schema(
            columns=cols,
            target=raw["target"],
            protected=tuple(raw.get("protected", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed schema {path}: {exc}") from exc


def save_schema(schema: Schema, path: str | Path) -> None:
    cols = []
    for c in schema.columns:
        entry: dict = {"name": c.name, "kind": c.kind.value}
        if c.scale is not None:
            entry["scale"] = c.scale
        cols.append(entry)
    doc = {
        "columns": cols,
        "target": schema.target,
        "protected": list(schema.protected),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind
    values: np.ndarray  # float64 (numeric) or int32 level codes (categorical)
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        _frozen(self.values)

    def decode(self, code: int) -> str:
        return self.levels[code]


@dataclass(frozen=True)
class DataTable:
    columns: tuple[Column, ...]
    target: str
    protected: tuple[str, ...] = ()

    def __post_init__(self):
        lengths = {len(c.values) for c in self.columns}
        if len(lengths) > 1:
            raise DataError("columns have unequal lengths")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0].values) if self.columns else 0

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"no column named {name!r}")

    def select_rows(self, indices: np.ndarray) -> "DataTable":
        """New table with the given rows, in the given order.  Level lists
        are inherited even when a level no longer appears."""
        idx = np.asarray(indices)
        cols = tuple(
            Column(c.name, c.kind, c.values[idx].copy(), c.levels)
            for c in self.columns
        )
        return DataTable(cols, self.target, self.protected)

    def replace_column(self, name: str, values: np.ndarray) -> "DataTable":
        old = self.column(name)
        if len(values) != self.n_rows:
            raise DataError(f"replacement for {name!r} has wrong length")
        new = Column(old.name, old.kind, np.array(values), old.levels)
        cols = tuple(new if c.name == name else c for c in self.columns)
        return DataTable(cols, self.target, self.protected)

    def with_columns(self, new: list[Column]) -> "DataTable":
        existing = set(self.column_names)
        for c in new:
            if c.name in existing:
                raise SchemaError(f"column {c.name!r} already present")
            if len(c.values) != self.n_rows:
                raise DataError(f"new column {c.name!r} has wrong length")
        return DataTable(self.columns + tuple(new), self.target, self.protected)

    def feature_matrix(self, exclude: tuple[str, ...]) -> "FeatureMatrix":
        """Dense float64 matrix for model fitting.  Categorical columns
        contribute their level codes as floats."""
        keep = [c for c in self.columns if c.name not in exclude]
        if not keep:
            raise SchemaError("no feature columns left after exclusions")
        X = np.empty((self.n_rows, len(keep)), dtype=np.float64)
        kinds = np.empty(len(keep), dtype=np.int8)
        levels = []
        for j, c in enumerate(keep):
            X[:, j] = c.values
            kinds[j] = 0 if c.kind is ColumnKind.NUMERIC else 1
            levels.append(c.levels)
        return FeatureMatrix(
            X=_frozen(X),
            kinds=_frozen(kinds),
            names=tuple(c.name for c in keep),
            levels=tuple(levels),
        )

    def content_hash(self) -> str:
        """sha256 over a canonical byte serialization of schema and data."""
        h = hashlib.sha256()
        h.update(repr((self.target, self.protected)).encode())
        for c in self.columns:
            h.update(c.name.encode())
            h.update(c.kind.value.encode())
            h.update(repr(c.levels).encode())
            h.update(np.ascontiguousarray(c.values).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray
    kinds: np.ndarray  # 0 numeric, 1 categorical, per feature column
    names: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class LoadResult:
    table: DataTable
    n_dropped: int
    ignored_columns: tuple[str, ...]


def load_csv(
    path: str | Path,
    schema: Schema,
    missing: MissingPolicy = MissingPolicy.FAIL,
) -> LoadResult:
    """Read a CSV against ``schema``.

    The header must contain every schema column; extra columns are ignored
    and reported.  Numeric cells are parsed as floats and multiplied by the
    column's scale factor, if any; the returned table's values are final, so
    all downstream statistics are in scaled units.  An empty cell, or a
    numeric cell that does not parse, is missing: under ``DROP_ROW`` the
    whole row is dropped (count reported), under ``FAIL`` loading aborts.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    positions = {}
    for c in schema.columns:
        if c.name not in header:
            raise SchemaError(f"{path}: column {c.name!r} missing from header")
        positions[c.name] = header.index(c.name)
    ignored = tuple(h for h in header if h not in positions)

    specs = schema.columns
    parsed: list[list] = [[] for _ in specs]
    interned: list[dict[str, int]] = [{} for _ in specs]
    n_dropped = 0
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
        cells = []
        ok = True
        for c in specs:
            text = row[positions[c.name]]
            if c.kind is ColumnKind.NUMERIC:
                try:
                    value = float(text)
                except ValueError:
                    value = None
                if value is not None and not math.isfinite(value):
                    value = None
                if value is None:
                    ok = False
                    bad = (c.name, text)
                    break
                cells.append(value * (c.scale or 1.0))
            else:
                if text == "":
                    ok = False
                    bad = (c.name, text)
                    break
                cells.append(text)
        if not ok:
            if missing is MissingPolicy.FAIL:
                raise DataError(
                    f"{path}:{lineno}: missing or unparseable value "
                    f"{bad[1]!r} in column {bad[0]!r}"
                )
            n_dropped += 1
            continue
        for j, c in enumerate(specs):
            if c.kind is ColumnKind.NUMERIC:
                parsed[j].append(cells[j])
            else:
                table = interned[j]
                code = table.setdefault(cells[j], len(table))
                parsed[j].append(code)

    if not parsed[0]:
        raise DataError(f"{path}: no usable rows")

    cols = []
    for j, c in enumerate(specs):
        if c.kind is ColumnKind.NUMERIC:
            cols.append(Column(c.name, c.kind, np.array(parsed[j], dtype=np.float64)))
        else:
            levels = tuple(interned[j].keys())
            cols.append(
                Column(c.name, c.kind, np.array(parsed[j], dtype=np.int32), levels)
            )
    table = DataTable(tuple(cols), schema.target, schema.protected)
    return LoadResult(table=table, n_dropped=n_dropped, ignored_columns=ignored)


def save_csv(table: DataTable, path: str | Path) -> None:
    """Write a table back to CSV.  Floats use shortest round-trip repr, so
    reloading with an unscaled schema reproduces the table exactly."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.column_names)
        decoders = [
            (c.values, c.levels if c.kind is ColumnKind.CATEGORICAL else None)
            for c in table.columns
        ]
        for i in range(table.n_rows):
            row = []
            for values, levels in decoders:
                if levels is None:
                    row.append(repr(float(values[i])))
                else:
                    row.append(levels[int(values[i])])
            writer.writerow(row)


def _group_codes(table: DataTable, by: str) -> tuple[np.ndarray, tuple[str, ...]]:
    col = table.column(by)
    if col.kind is not ColumnKind.CATEGORICAL:
        raise DataError(f"column {by!r} is not categorical")
    return col.values, col.levels


def group_counts(table: DataTable, by: str) -> dict[str, int]:
    """Row count per level, for levels that appear in the data."""
    codes, levels = _group_codes(table, by)
    counts = np.bincount(codes, minlength=len(levels))
    return {levels[i]: int(counts[i]) for i in range(len(levels)) if counts[i] > 0}


def group_mean(table: DataTable, value: str, by: str | None = None) -> dict[str, float]:
    """Mean of a numeric column, overall (key "all") or per group level."""
    col = table.column(value)
    if col.kind is not ColumnKind.NUMERIC:
        raise DataError(f"column {value!r} is not numeric")
    if by is None:
        return {"all": float(col.values.mean())}
    codes, levels = _group_codes(table, by)
    out = {}
    for i, level in enumerate(levels):
        mask = codes == i
        if mask.any():
            out[level] = float(col.values[mask].mean())
    return out


def _quantile_sorted(x: np.ndarray, p: float) -> float:
    n = len(x)
    if n == 0:
        raise DataError("quantile of empty group")
    h = (n - 1) * p
    lo = math.floor(h)
    if lo >= n - 1:
        return float(x[n - 1])
    return float(x[lo] + (h - lo) * (x[lo + 1] - x[lo]))


def quantiles(
    table: DataTable,
    value: str,
    probs: tuple[float, ...],
    by: str | None = None,
) -> dict[str, tuple[float, ...]]:
    """Interpolated quantiles of a numeric column, overall or per group."""
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise DataError(f"probability {p} outside [0, 1]")
    col = table.column(value)
    if col.kind is not ColumnKind.NUMERIC:
        raise DataError(f"column {value!r} is not numeric")
    if by is None:
        x = np.sort(col.values)
        return {"all": tuple(_quantile_sorted(x, p) for p in probs)}
    codes, levels = _group_codes(table, by)
    out = {}
    for i, level in enumerate(levels):
        mask = codes == i
        if mask.any():
            x = np.sort(col.values[mask])
            out[level] = tuple(_quantile_sorted(x, p) for p in probs)
    return out


@dataclass(frozen=True)
class HistogramData:
    """Equal-width histogram; edges are shared by all groups so per-group
    counts line up bin for bin.  The last bin includes its right edge.  A
    constant column yields one degenerate (v, v) bin holding everything."""

    edges: tuple[float, ...]
    counts: dict[str, tuple[int, ...]] = field(default_factory=dict)
    degenerate: bool = False


def histogram(
    table: DataTable,
    value: str,
    bins: int,
    by: str | None = None,
) -> HistogramData:
    if bins < 1:
        raise DataError("bins must be >= 1")
    col = table.column(value)
    if col.kind is not ColumnKind.NUMERIC:
        raise DataError(f"column {value!r} is not numeric")
    x = col.values
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        groups = _histogram_groups(table, x, by, np.array([lo, hi]), degenerate=True)
        return HistogramData(edges=(lo, hi), counts=groups, degenerate=True)
    edges = np.linspace(lo, hi, bins + 1)
    groups = _histogram_groups(table, x, by, edges, degenerate=False)
    return HistogramData(edges=tuple(float(e) for e in edges), counts=groups)


def _histogram_groups(
    table: DataTable,
    x: np.ndarray,
    by: str | None,
    edges: np.ndarray,
    degenerate: bool,
) -> dict[str, tuple[int, ...]]:
    def count(values: np.ndarray) -> tuple[int, ...]:
        if degenerate:
            return (len(values),)
        c, _ = np.histogram(values, bins=edges)
        return tuple(int(v) for v in c)

    if by is None:
        return {"all": count(x)}
    codes, levels = _group_codes(table, by)
    out = {}
    for i, level in enumerate(levels):
        mask = codes == i
        if mask.any():
            out[level] = count(x[mask])
    return out
