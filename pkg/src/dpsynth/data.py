"""Tabular data model: schemas, datasets, CSV ingestion, discretization,
splitting, and the seeded synthetic classification-task generator.

Datasets are immutable after construction (the backing array is marked
read-only), so they can be shared freely across threads. Categorical cells
hold integers in ``[0, cardinality)``; continuous cells hold reals in
``[lower, upper]`` and are discretized by equal-width binning.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DomainTooLarge,
    EmptySplit,
    InvalidSpec,
    LengthMismatch,
    MissingColumn,
    OutOfDomainValue,
    SchemaMismatch,
    UnknownColumn,
    UnparseableCell,
)

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"

# Flat histograms larger than this are refused outright (MWEM scaling limit).
MAX_FLAT_DOMAIN = 10_000_000


@dataclass(frozen=True)
class ColumnSchema:
    """Declared domain of one column.

    Categorical columns carry a cardinality; continuous columns carry
    ``[lower, upper]`` bounds plus the bin count used whenever the column
    is discretized.
    """

    name: str
    kind: str
    cardinality: int | None = None
    lower: float | None = None
    upper: float | None = None
    bins: int = 10

    def __post_init__(self):
        if not self.name:
            raise InvalidSpec("column name must be nonempty")
        if self.kind == CATEGORICAL:
            if self.cardinality is None or self.cardinality < 1:
                raise InvalidSpec(f"column {self.name!r}: cardinality must be >= 1")
        elif self.kind == CONTINUOUS:
            if self.lower is None or self.upper is None or not self.lower < self.upper:
                raise InvalidSpec(f"column {self.name!r}: requires lower < upper")
            if self.bins < 1:
                raise InvalidSpec(f"column {self.name!r}: bins must be >= 1")
        else:
            raise InvalidSpec(f"column {self.name!r}: unknown kind {self.kind!r}")

    @property
    def cells(self) -> int:
        """Number of discretized cells this column contributes."""
        return self.cardinality if self.kind == CATEGORICAL else self.bins

    @classmethod
    def categorical(cls, name: str, cardinality: int) -> "ColumnSchema":
        return cls(name=name, kind=CATEGORICAL, cardinality=cardinality)

    @classmethod
    def continuous(cls, name: str, lower: float, upper: float, bins: int = 10) -> "ColumnSchema":
        return cls(name=name, kind=CONTINUOUS, lower=float(lower), upper=float(upper), bins=bins)


def _check_unique_names(schema: tuple[ColumnSchema, ...]) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise InvalidSpec(f"duplicate column names in schema: {names}")


class AccessLog:
    """Append-only record of dataset value reads, for privacy audits."""

    def __init__(self):
        self.records: list[tuple[str, tuple[str, ...], str]] = []

    def record(self, dataset: str, columns: tuple[str, ...], operation: str) -> None:
        self.records.append((dataset, columns, operation))

    def mark(self) -> int:
        return len(self.records)

    def since(self, mark: int) -> list[tuple[str, tuple[str, ...], str]]:
        return self.records[mark:]

    def columns_seen(self, dataset: str | None = None) -> set[str]:
        seen: set[str] = set()
        for name, cols, _ in self.records:
            if dataset is None or name == dataset:
                seen.update(cols)
        return seen


class TabularDataset:
    """Schema-typed rows stored as a read-only (n, ncols) float array."""

    def __init__(
        self,
        schema,
        values: np.ndarray,
        target_column: str | None = None,
        _validated: bool = False,
    ):
        schema = tuple(schema)
        _check_unique_names(schema)
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(schema):
            if values.size == 0:
                values = values.reshape(0, len(schema))
            else:
                raise SchemaMismatch(
                    f"expected {len(schema)} columns, got array of shape {values.shape}"
                )
        if target_column is not None:
            col = _column(schema, target_column)
            if col.kind != CATEGORICAL:
                raise InvalidSpec(f"target column {target_column!r} must be categorical")
        if not _validated:
            _validate_values(schema, values)
        values = values.copy()
        values.setflags(write=False)
        self.schema = schema
        self.values = values
        self.target_column = target_column
        self._audit_log: AccessLog | None = None
        self._audit_name: str | None = None

    # -- basic shape ----------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.schema]

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.schema):
            if c.name == name:
                return i
        raise UnknownColumn(f"no column named {name!r}")

    @property
    def feature_columns(self) -> list[str]:
        return [c.name for c in self.schema if c.name != self.target_column]

    # -- auditing ---------------------------------------------------------------

    def with_audit(self, log: AccessLog, name: str) -> "TabularDataset":
        """Shallow copy whose value reads are recorded in ``log`` under ``name``."""
        out = TabularDataset.__new__(TabularDataset)
        out.schema = self.schema
        out.values = self.values
        out.target_column = self.target_column
        out._audit_log = log
        out._audit_name = name
        return out

    def _note(self, columns: tuple[str, ...], operation: str) -> None:
        if self._audit_log is not None:
            self._audit_log.record(self._audit_name or "", columns, operation)

    # -- value access (audited) -------------------------------------------------

    def feature_matrix(self) -> np.ndarray:
        """All non-target columns as a float matrix."""
        names = self.feature_columns
        self._note(tuple(names), "feature_matrix")
        idx = [self.column_index(n) for n in names]
        return self.values[:, idx]

    def target_vector(self) -> np.ndarray:
        from .errors import NoTarget

        if self.target_column is None:
            raise NoTarget("dataset has no target column")
        self._note((self.target_column,), "target_vector")
        return self.values[:, self.column_index(self.target_column)].astype(np.int64)

    def column_values(self, name: str) -> np.ndarray:
        self._note((name,), "column_values")
        return self.values[:, self.column_index(name)]

    def raw_values(self) -> np.ndarray:
        self._note(tuple(self.column_names), "raw_values")
        return self.values

    def iter_rows(self):
        self._note(tuple(self.column_names), "iter_rows")
        cats = [c.kind == CATEGORICAL for c in self.schema]
        for row in self.values:
            yield tuple(int(v) if is_cat else float(v) for v, is_cat in zip(row, cats))


def _column(schema: tuple[ColumnSchema, ...], name: str) -> ColumnSchema:
    for c in schema:
        if c.name == name:
            return c
    raise UnknownColumn(f"no column named {name!r}")


def _validate_values(schema: tuple[ColumnSchema, ...], values: np.ndarray) -> None:
    for j, col in enumerate(schema):
        v = values[:, j]
        if col.kind == CATEGORICAL:
            if not np.all(v == np.floor(v)):
                bad = int(np.argmax(v != np.floor(v)))
                raise OutOfDomainValue(
                    f"row {bad}, column {col.name!r}: {v[bad]} is not an integer category"
                )
            if v.size and (v.min() < 0 or v.max() >= col.cardinality):
                bad = int(np.argmax((v < 0) | (v >= col.cardinality)))
                raise OutOfDomainValue(
                    f"row {bad}, column {col.name!r}: {v[bad]} outside [0, {col.cardinality})"
                )
        else:
            if v.size and (not np.all(np.isfinite(v)) or v.min() < col.lower or v.max() > col.upper):
                bad = int(np.argmax(~np.isfinite(v) | (v < col.lower) | (v > col.upper)))
                raise OutOfDomainValue(
                    f"row {bad}, column {col.name!r}: {v[bad]} outside "
                    f"[{col.lower}, {col.upper}]"
                )


# -- schema file I/O -------------------------------------------------------------


def load_schema_json(path) -> tuple[tuple[ColumnSchema, ...], str | None]:
    """Read the schema JSON format: {"columns": [...], "target": name|null}."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"schema file {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "columns" not in doc:
        raise InvalidSpec(f"schema file {path}: expected an object with a 'columns' list")
    columns = []
    for entry in doc["columns"]:
        kind = entry.get("kind")
        name = entry.get("name")
        if kind == CATEGORICAL:
            columns.append(ColumnSchema.categorical(name, int(entry["cardinality"])))
        elif kind == CONTINUOUS:
            columns.append(
                ColumnSchema.continuous(
                    name,
                    float(entry["lower"]),
                    float(entry["upper"]),
                    int(entry.get("bins", 10)),
                )
            )
        else:
            raise InvalidSpec(f"schema file {path}: column {name!r} has unknown kind {kind!r}")
    target = doc.get("target")
    schema = tuple(columns)
    _check_unique_names(schema)
    if target is not None:
        _column(schema, target)
    return schema, target


def schema_to_json_dict(schema, target: str | None = None) -> dict:
    cols = []
    for c in schema:
        if c.kind == CATEGORICAL:
            cols.append({"name": c.name, "kind": c.kind, "cardinality": c.cardinality})
        else:
            cols.append(
                {"name": c.name, "kind": c.kind, "lower": c.lower, "upper": c.upper, "bins": c.bins}
            )
    return {"columns": cols, "target": target}


# -- CSV ingestion ----------------------------------------------------------------


def load_csv(path, schema, target: str | None = None) -> TabularDataset:
    """Parse a header-first CSV into a validated dataset.

    The header must name exactly the schema columns (any order). Missing
    values are rejected; out-of-range cells raise with row/column context.
    """
    schema = tuple(schema)
    _check_unique_names(schema)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file, expected a header row") from None
        names = {c.name for c in schema}
        got = set(header)
        missing = names - got
        if missing:
            raise MissingColumn(f"{path}: header lacks columns {sorted(missing)}")
        extra = got - names
        if extra:
            raise UnknownColumn(f"{path}: header has unknown columns {sorted(extra)}")
        order = [header.index(c.name) for c in schema]
        rows = []
        for i, raw in enumerate(reader):
            if len(raw) != len(header):
                raise UnparseableCell(f"row {i}: expected {len(header)} cells, got {len(raw)}")
            parsed = []
            for j, col in zip(order, schema):
                cell = raw[j].strip()
                if cell == "":
                    raise UnparseableCell(f"row {i}, column {col.name!r}: missing value")
                try:
                    parsed.append(float(cell) if col.kind == CONTINUOUS else int(cell))
                except ValueError:
                    raise UnparseableCell(
                        f"row {i}, column {col.name!r}: cannot parse {cell!r}"
                    ) from None
            rows.append(parsed)
    values = np.asarray(rows, dtype=float).reshape(len(rows), len(schema))
    return TabularDataset(schema, values, target_column=target)


def write_csv(dataset: TabularDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.column_names)
        for row in dataset.iter_rows():
            writer.writerow([str(v) if isinstance(v, int) else repr(v) for v in row])


# -- column-level operations --------------------------------------------------------


def drop_column(d: TabularDataset, name: str) -> TabularDataset:
    """Dataset without ``name``; clears the target designation if it was dropped."""
    idx = d.column_index(name)
    schema = tuple(c for c in d.schema if c.name != name)
    if not schema:
        raise InvalidSpec("cannot drop the only column")
    keep = [j for j in range(len(d.schema)) if j != idx]
    target = d.target_column if d.target_column != name else None
    return TabularDataset(schema, d.values[:, keep], target_column=target, _validated=True)


def append_labels(d: TabularDataset, labels, name: str, card: int) -> TabularDataset:
    """Append a categorical target column holding ``labels``."""
    labels = np.asarray(labels, dtype=float)
    if labels.ndim != 1 or labels.shape[0] != d.n_rows:
        raise LengthMismatch(f"expected {d.n_rows} labels, got {labels.shape}")
    if name in d.column_names:
        raise InvalidSpec(f"column {name!r} already exists")
    col = ColumnSchema.categorical(name, card)
    if labels.size and (
        not np.all(labels == np.floor(labels)) or labels.min() < 0 or labels.max() >= card
    ):
        raise OutOfDomainValue(f"labels for {name!r} must be integers in [0, {card})")
    values = np.column_stack([d.values, labels]) if d.n_rows else np.empty((0, len(d.schema) + 1))
    return TabularDataset(d.schema + (col,), values, target_column=name, _validated=True)


# -- discretization ---------------------------------------------------------------


@dataclass(frozen=True)
class DiscretizedView:
    """Mixed-radix view of a schema's flat cell domain.

    Cell indices are row-major over the per-column cell counts; the flat
    domain size is the product of those counts.
    """

    schema: tuple[ColumnSchema, ...]
    shape: tuple[int, ...]
    domain_size: int

    @classmethod
    def from_schema(cls, schema) -> "DiscretizedView":
        schema = tuple(schema)
        shape = tuple(c.cells for c in schema)
        size = 1
        for s in shape:
            size *= s
        return cls(schema=schema, shape=shape, domain_size=size)

    def column_cells(self, values: np.ndarray) -> np.ndarray:
        """Per-column cell indices for a value matrix, shape (n, ncols)."""
        out = np.empty(values.shape, dtype=np.int64)
        for j, col in enumerate(self.schema):
            v = values[:, j]
            if col.kind == CATEGORICAL:
                out[:, j] = v.astype(np.int64)
            else:
                width = (col.upper - col.lower) / col.bins
                cells = np.floor((v - col.lower) / width).astype(np.int64)
                out[:, j] = np.clip(cells, 0, col.bins - 1)
        return out

    def flat_cells(self, values: np.ndarray) -> np.ndarray:
        cells = self.column_cells(values)
        return np.ravel_multi_index(tuple(cells.T), self.shape)

    def representatives(self, flat: np.ndarray) -> np.ndarray:
        """Materialize flat cell indices back into column values.

        Categorical cells map to their index; continuous cells map to the
        bin midpoint.
        """
        multi = np.unravel_index(np.asarray(flat, dtype=np.int64), self.shape)
        out = np.empty((len(flat), len(self.schema)), dtype=float)
        for j, col in enumerate(self.schema):
            idx = multi[j].astype(float)
            if col.kind == CATEGORICAL:
                out[:, j] = idx
            else:
                width = (col.upper - col.lower) / col.bins
                out[:, j] = col.lower + (idx + 0.5) * width
        return out


def cell_counts(d: TabularDataset, view: DiscretizedView) -> np.ndarray:
    """Flat histogram of the dataset over the view's cell domain."""
    if view.domain_size > MAX_FLAT_DOMAIN:
        raise DomainTooLarge(
            f"flat domain has {view.domain_size} cells (cap {MAX_FLAT_DOMAIN})"
        )
    flat = view.flat_cells(d.raw_values())
    return np.bincount(flat, minlength=view.domain_size).astype(np.int64)


def discretize(d: TabularDataset) -> tuple[DiscretizedView, np.ndarray]:
    view = DiscretizedView.from_schema(d.schema)
    return view, cell_counts(d, view)


# -- synthetic classification tasks ---------------------------------------------


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Parameters of a generated multiclass classification dataset."""

    n_samples: int
    n_features: int
    n_classes: int
    n_informative: int | None = None
    class_separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        informative = self.n_informative if self.n_informative is not None else self.n_features
        if self.n_features < 1 or informative < 1 or informative > self.n_features:
            raise InvalidSpec("need 1 <= n_informative <= n_features")
        if self.n_classes < 2:
            raise InvalidSpec("need n_classes >= 2")
        if self.n_samples < self.n_classes:
            raise InvalidSpec("need n_samples >= n_classes")
        if self.class_separation <= 0:
            raise InvalidSpec("class_separation must be positive")

    @property
    def informative(self) -> int:
        return self.n_informative if self.n_informative is not None else self.n_features


def generate_classification_data(
    spec: SyntheticTaskSpec, feature_bins: int = 10, target_name: str = "label"
) -> TabularDataset:
    """Gaussian clusters at hypercube-vertex centroids, pure in ``spec.seed``.

    Classes sit at distinct sign-pattern vertices scaled by
    ``class_separation`` in the informative subspace; remaining features are
    independent unit noise. Values are clipped to the declared column bounds.
    """
    gen = np.random.Generator(np.random.Philox(key=spec.seed & ((1 << 64) - 1)))
    k, d, m = spec.n_classes, spec.n_features, spec.informative

    n_vertices = 2**m if m < 62 else 1 << 62
    if k <= n_vertices:
        codes = gen.choice(n_vertices, size=k, replace=False)
        bits = ((codes[:, None] >> np.arange(m)[None, :]) & 1).astype(float)
        centroids = (2.0 * bits - 1.0) * spec.class_separation
    else:
        raw = gen.normal(size=(k, m))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        centroids = raw * spec.class_separation * math.sqrt(m)

    base, rem = divmod(spec.n_samples, k)
    labels = np.repeat(np.arange(k), base)
    labels = np.concatenate([labels, np.arange(rem)])
    gen.shuffle(labels)

    features = gen.normal(size=(spec.n_samples, d))
    features[:, :m] += centroids[labels]

    bound = float(spec.class_separation + 4.0)
    np.clip(features, -bound, bound, out=features)

    schema = tuple(
        ColumnSchema.continuous(f"f{j}", -bound, bound, bins=feature_bins) for j in range(d)
    ) + (ColumnSchema.categorical(target_name, k),)
    values = np.column_stack([features, labels.astype(float)])
    return TabularDataset(schema, values, target_column=target_name, _validated=True)


# -- splitting --------------------------------------------------------------------


def train_test_split(
    d: TabularDataset, fraction: float, seed: int
) -> tuple[TabularDataset, TabularDataset]:
    """Disjoint (train, test) partition with ``floor(fraction * n)`` train rows.

    Stratifies on the target when one is set: per-class train counts follow
    the largest-remainder method, so each class lands within one row of its
    proportional share.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidSpec(f"split fraction must lie in (0, 1), got {fraction}")
    n = d.n_rows
    n_train = math.floor(fraction * n)
    if n_train == 0 or n_train == n:
        raise EmptySplit(f"fraction {fraction} of {n} rows leaves an empty side")
    gen = np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))

    if d.target_column is None:
        perm = gen.permutation(n)
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
    else:
        y = d.values[:, d.column_index(d.target_column)].astype(np.int64)
        classes = np.unique(y)
        shares = {}
        floors = {}
        for c in classes:
            exact = fraction * np.sum(y == c)
            floors[c] = math.floor(exact)
            shares[c] = exact - floors[c]
        short = n_train - sum(floors.values())
        order = sorted(classes, key=lambda c: (-shares[c], c))
        take = dict(floors)
        for c in order[:short]:
            take[c] += 1
        train_parts = []
        for c in classes:
            idx = np.flatnonzero(y == c)
            gen.shuffle(idx)
            train_parts.append(idx[: take[c]])
        train_idx = np.sort(np.concatenate(train_parts))
        mask = np.ones(n, dtype=bool)
        mask[train_idx] = False
        test_idx = np.flatnonzero(mask)

    t = d.target_column
    return (
        TabularDataset(d.schema, d.values[train_idx], target_column=t, _validated=True),
        TabularDataset(d.schema, d.values[test_idx], target_column=t, _validated=True),
    )
