"""Pair-level records, CSV ingestion, and the symmetric stacking transform.

A dataset is stored column-wise (numpy arrays) because every downstream
consumer works on whole columns; :class:`TwinPairRecord` is the row view.

The wide CSV layout is one pair per row::

    pair_id, c_<shared>..., x1_<individual>..., x2_<individual>..., a1, a2, y1, y2

Twin labels are taken from column order, so labels must have been randomized
before the file was written.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (DuplicatePairId, EmptySubset, InvalidCategory, MissingColumn,
                     NonBinaryExposure, NonFiniteValue, SchemaError)

OUTCOME_COLUMNS = ("a1", "a2", "y1", "y2")
COTWIN_PREFIX = "cotwin_"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    type: str = "real"
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.type not in ("real", "categorical"):
            raise SchemaError(f"column {self.name!r}: unknown type {self.type!r}")
        if self.type == "categorical":
            if not self.levels or len(self.levels) < 2:
                raise SchemaError(f"categorical column {self.name!r} needs at least two levels")
            object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))

    @property
    def encoded_names(self) -> list[str]:
        # first level is the reference
        if self.type == "real":
            return [self.name]
        return [f"{self.name}_{lvl}" for lvl in self.levels[1:]]

    def encode(self, raw: str, row: int, column: str) -> list[float]:
        if self.type == "real":
            return [_parse_real(raw, row, column)]
        if raw not in self.levels:
            raise InvalidCategory(row, column, raw, self.levels)
        return [1.0 if raw == lvl else 0.0 for lvl in self.levels[1:]]


@dataclass(frozen=True)
class SchemaSpec:
    """Column roles and types for the wide pair file.

    ``zygosity`` and ``sex`` name shared categorical columns; zygosity must
    have the levels ``DZ`` and ``MZ``.
    """

    shared: tuple[ColumnSpec, ...]
    individual: tuple[ColumnSpec, ...]
    zygosity: str = "zygosity"
    sex: str = "sex"
    pair_id: str = "pair_id"

    def __post_init__(self):
        names = [c.name for c in self.shared]
        for role in (self.zygosity, self.sex):
            if role not in names:
                raise SchemaError(f"shared covariates must include {role!r}")
        zyg = self.shared[names.index(self.zygosity)]
        if zyg.type != "categorical" or set(zyg.levels) != {"DZ", "MZ"}:
            raise SchemaError("zygosity must be categorical with levels DZ and MZ")

    @property
    def shared_names(self) -> tuple[str, ...]:
        return tuple(n for c in self.shared for n in c.encoded_names)

    @property
    def individual_names(self) -> tuple[str, ...]:
        return tuple(n for c in self.individual for n in c.encoded_names)

    @property
    def zygosity_column(self) -> str:
        """Encoded 0/1 column that is 1 for MZ pairs."""
        spec = next(c for c in self.shared if c.name == self.zygosity)
        if spec.levels[0] == "MZ":
            raise SchemaError("zygosity levels must list DZ first so that the indicator is MZ")
        return f"{self.zygosity}_MZ"

    def csv_header(self) -> list[str]:
        return ([self.pair_id] + [f"c_{c.name}" for c in self.shared]
                + [f"x1_{c.name}" for c in self.individual]
                + [f"x2_{c.name}" for c in self.individual] + list(OUTCOME_COLUMNS))

    def to_dict(self) -> dict:
        def col(c):
            d = {"name": c.name, "type": c.type}
            if c.levels:
                d["levels"] = list(c.levels)
            return d
        return {"pair_id": self.pair_id, "zygosity": self.zygosity, "sex": self.sex,
                "shared": [col(c) for c in self.shared],
                "individual": [col(c) for c in self.individual]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SchemaSpec":
        def col(e):
            return ColumnSpec(e["name"], e.get("type", "real"),
                              tuple(e["levels"]) if e.get("levels") else None)
        try:
            return cls(shared=tuple(col(e) for e in d["shared"]),
                       individual=tuple(col(e) for e in d["individual"]),
                       zygosity=d.get("zygosity", "zygosity"), sex=d.get("sex", "sex"),
                       pair_id=d.get("pair_id", "pair_id"))
        except KeyError as exc:
            raise SchemaError(f"schema is missing key {exc}") from None

    @classmethod
    def load(cls, path) -> "SchemaSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TwinPairRecord:
    """One pair's observed data (C, X1, X2, A1, A2, Y1, Y2)."""

    pair_id: str
    c: dict[str, float]
    x1: dict[str, float]
    x2: dict[str, float]
    a1: int
    a2: int
    y1: float
    y2: float


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PairedDataset:
    """Immutable column store of ``n`` pairs.

    ``weights`` is optional (pair-level frequency weights); it is only used
    when a discrete population is expanded into an explicit weighted dataset.
    """

    pair_ids: np.ndarray
    c: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    c_names: tuple[str, ...]
    x_names: tuple[str, ...]
    zygosity_column: str | None = None
    weights: np.ndarray | None = None
    schema: SchemaSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.pair_ids)
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("pair_ids", _readonly([str(p) for p in self.pair_ids], dtype=object))
        set_("c", _readonly(np.reshape(self.c, (n, len(self.c_names)))))
        set_("x1", _readonly(np.reshape(self.x1, (n, len(self.x_names)))))
        set_("x2", _readonly(np.reshape(self.x2, (n, len(self.x_names)))))
        for k in ("y1", "y2"):
            set_(k, _readonly(np.reshape(getattr(self, k), n)))
        for k in ("a1", "a2"):
            v = np.reshape(np.asarray(getattr(self, k), dtype=float), n)
            bad = np.flatnonzero((v != 0) & (v != 1))
            if bad.size:
                raise NonBinaryExposure(int(bad[0]) + 1, k, v[bad[0]])
            set_(k, _readonly(v.astype(np.int64), dtype=np.int64))
        set_("c_names", tuple(self.c_names))
        set_("x_names", tuple(self.x_names))
        if self.weights is not None:
            w = _readonly(np.reshape(self.weights, n))
            if np.any(~np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
                raise SchemaError("weights must be finite, non-negative and not all zero")
            set_("weights", w)
        if n < 1:
            raise EmptySubset("a dataset needs at least one pair")
        for name, arr in (("c", self.c), ("x1", self.x1), ("x2", self.x2), ("y1", self.y1), ("y2", self.y2)):
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise NonFiniteValue(int(bad[0]) + 1, name, arr[tuple(bad)])
        if len(set(self.pair_ids)) != n:
            seen = set()
            for i, p in enumerate(self.pair_ids):
                if p in seen:
                    raise DuplicatePairId(i + 1, p)
                seen.add(p)
        if self.zygosity_column is not None and self.zygosity_column not in self.c_names:
            raise SchemaError(f"zygosity column {self.zygosity_column!r} not among shared covariates")

    def __len__(self) -> int:
        return len(self.pair_ids)

    @property
    def n(self) -> int:
        return len(self.pair_ids)

    @property
    def records(self) -> list[TwinPairRecord]:
        return list(self)

    def __iter__(self) -> Iterator[TwinPairRecord]:
        for i in range(self.n):
            yield TwinPairRecord(
                pair_id=self.pair_ids[i],
                c=dict(zip(self.c_names, self.c[i].tolist())),
                x1=dict(zip(self.x_names, self.x1[i].tolist())),
                x2=dict(zip(self.x_names, self.x2[i].tolist())),
                a1=int(self.a1[i]), a2=int(self.a2[i]),
                y1=float(self.y1[i]), y2=float(self.y2[i]))

    @classmethod
    def from_records(cls, records: Sequence[TwinPairRecord], **kw) -> "PairedDataset":
        if not records:
            raise EmptySubset("no records")
        c_names = tuple(records[0].c)
        x_names = tuple(records[0].x1)
        for r in records:
            if tuple(r.c) != c_names or tuple(r.x1) != x_names or tuple(r.x2) != x_names:
                raise SchemaError(f"pair {r.pair_id!r}: covariate names differ from the first record")
        return cls(pair_ids=[r.pair_id for r in records],
                   c=[[r.c[k] for k in c_names] for r in records],
                   x1=[[r.x1[k] for k in x_names] for r in records],
                   x2=[[r.x2[k] for k in x_names] for r in records],
                   a1=[r.a1 for r in records], a2=[r.a2 for r in records],
                   y1=[r.y1 for r in records], y2=[r.y2 for r in records],
                   c_names=c_names, x_names=x_names, **kw)

    def replace(self, **changes) -> "PairedDataset":
        fields_ = dict(pair_ids=self.pair_ids, c=self.c, x1=self.x1, x2=self.x2, a1=self.a1,
                       a2=self.a2, y1=self.y1, y2=self.y2, c_names=self.c_names,
                       x_names=self.x_names, zygosity_column=self.zygosity_column,
                       weights=self.weights, schema=self.schema)
        fields_.update(changes)
        return PairedDataset(**fields_)

    def take(self, index) -> "PairedDataset":
        """Rows ``index`` in order; repeated rows get ids ``<id>#<position>``."""
        index = np.asarray(index, dtype=np.int64)
        ids = self.pair_ids[index]
        if len(np.unique(index)) != len(index):
            ids = [f"{p}#{k}" for k, p in enumerate(ids)]
        return self.replace(pair_ids=ids, c=self.c[index], x1=self.x1[index], x2=self.x2[index],
                            a1=self.a1[index], a2=self.a2[index], y1=self.y1[index],
                            y2=self.y2[index],
                            weights=None if self.weights is None else self.weights[index])

    def swap_labels(self) -> "PairedDataset":
        """Exchange the Twin 1 and Twin 2 labels in every pair."""
        return self.replace(x1=self.x2, x2=self.x1, a1=self.a2, a2=self.a1, y1=self.y2, y2=self.y1)

    def shared(self, name: str) -> np.ndarray:
        try:
            return self.c[:, self.c_names.index(name)]
        except ValueError:
            raise SchemaError(f"no shared covariate named {name!r}") from None

    @property
    def is_mz(self) -> np.ndarray:
        if self.zygosity_column is None:
            raise SchemaError("dataset has no zygosity column")
        return self.shared(self.zygosity_column) == 1

    @property
    def pair_weights(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    @cached_property
    def stacked(self) -> "StackedRows":
        return _stack(self)


def _parse_real(raw: str, row: int, column: str) -> float:
    if raw is None or raw.strip() == "":
        raise NonFiniteValue(row, column, raw)
    try:
        v = float(raw)
    except ValueError:
        raise NonFiniteValue(row, column, raw) from None
    if not math.isfinite(v):
        raise NonFiniteValue(row, column, raw)
    return v


def load_dataset(path, schema: SchemaSpec | str | Path) -> PairedDataset:
    """Read and validate a wide pair CSV.

    Row numbers in errors count data rows from 1 (the header is row 0).
    """
    if not isinstance(schema, SchemaSpec):
        schema = SchemaSpec.load(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn(schema.pair_id) from None
        pos = {h: i for i, h in enumerate(header)}
        for col in schema.csv_header():
            if col not in pos:
                raise MissingColumn(col)
        ids, c, x1, x2, out = [], [], [], [], []
        seen: set[str] = set()
        for r, line in enumerate(reader, start=1):
            if not line or all(not v.strip() for v in line):
                continue
            if len(line) < len(header):
                raise MissingColumn(header[len(line)], row=r)
            get = lambda col: line[pos[col]].strip()
            pid = get(schema.pair_id)
            if pid == "":
                raise NonFiniteValue(r, schema.pair_id, pid)
            if pid in seen:
                raise DuplicatePairId(r, pid)
            seen.add(pid)
            ids.append(pid)
            c.append([v for s in schema.shared for v in s.encode(get(f"c_{s.name}"), r, f"c_{s.name}")])
            for twin, dest in (("x1", x1), ("x2", x2)):
                dest.append([v for s in schema.individual
                             for v in s.encode(get(f"{twin}_{s.name}"), r, f"{twin}_{s.name}")])
            vals = []
            for col in OUTCOME_COLUMNS:
                v = _parse_real(get(col), r, col)
                if col in ("a1", "a2") and v not in (0.0, 1.0):
                    raise NonBinaryExposure(r, col, get(col))
                vals.append(v)
            out.append(vals)
    if not ids:
        raise EmptySubset(f"{path}: no data rows")
    out = np.asarray(out)
    return PairedDataset(pair_ids=ids, c=c, x1=x1, x2=x2, a1=out[:, 0], a2=out[:, 1],
                         y1=out[:, 2], y2=out[:, 3], c_names=schema.shared_names,
                         x_names=schema.individual_names,
                         zygosity_column=schema.zygosity_column, schema=schema)


def write_dataset(ds: PairedDataset, path) -> None:
    """Write ``ds`` in the wide layout; categorical columns are decoded via its schema."""
    schema = ds.schema
    if schema is None:
        raise SchemaError("writing requires the dataset's schema")

    def decode(spec: ColumnSpec, values: Mapping[str, float]) -> str:
        if spec.type == "real":
            return repr(float(values[spec.name]))
        for lvl in spec.levels[1:]:
            if values[f"{spec.name}_{lvl}"] == 1:
                return lvl
        return spec.levels[0]

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(schema.csv_header())
        for rec in ds:
            w.writerow([rec.pair_id] + [decode(s, rec.c) for s in schema.shared]
                       + [decode(s, rec.x1) for s in schema.individual]
                       + [decode(s, rec.x2) for s in schema.individual]
                       + [rec.a1, rec.a2, repr(rec.y1), repr(rec.y2)])


def subset_by_zygosity(ds: PairedDataset, zyg: str) -> PairedDataset:
    if zyg not in ("MZ", "DZ"):
        raise ValueError(f"zygosity must be 'MZ' or 'DZ', got {zyg!r}")
    mask = ds.is_mz if zyg == "MZ" else ~ds.is_mz
    if not mask.any():
        raise EmptySubset(f"no {zyg} pairs in dataset")
    return ds.take(np.flatnonzero(mask))


@dataclass(frozen=True)
class StackedRow:
    pair_id: str
    own_index: int
    c: dict[str, float]
    x_own: dict[str, float]
    x_cotwin: dict[str, float]
    a_own: int
    a_cotwin: int
    y_own: float


@dataclass(frozen=True, eq=False)
class StackedRows:
    """The 2n twin-level rows: all Twin 1 rows first, then all Twin 2 rows.

    ``columns`` exposes every row variable by name for basis evaluation:
    shared covariates and own covariates under their plain names, the
    co-twin's covariates as ``cotwin_<name>``, and ``a_own``, ``a_cotwin``,
    ``a_bar``, ``y_own``, ``own_index``.
    """

    pair_ids: np.ndarray
    own_index: np.ndarray
    c: np.ndarray
    x_own: np.ndarray
    x_cotwin: np.ndarray
    a_own: np.ndarray
    a_cotwin: np.ndarray
    y_own: np.ndarray
    c_names: tuple[str, ...]
    x_names: tuple[str, ...]
    weights: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.own_index)

    @property
    def n_pairs(self) -> int:
        return len(self) // 2

    def __getitem__(self, i: int) -> StackedRow:
        return StackedRow(pair_id=self.pair_ids[i], own_index=int(self.own_index[i]),
                          c=dict(zip(self.c_names, self.c[i].tolist())),
                          x_own=dict(zip(self.x_names, self.x_own[i].tolist())),
                          x_cotwin=dict(zip(self.x_names, self.x_cotwin[i].tolist())),
                          a_own=int(self.a_own[i]), a_cotwin=int(self.a_cotwin[i]),
                          y_own=float(self.y_own[i]))

    def __iter__(self) -> Iterator[StackedRow]:
        return (self[i] for i in range(len(self)))

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        cols: dict[str, np.ndarray] = {}
        for k, name in enumerate(self.c_names):
            cols[name] = self.c[:, k]
        for k, name in enumerate(self.x_names):
            cols[name] = self.x_own[:, k]
            cols[COTWIN_PREFIX + name] = self.x_cotwin[:, k]
        a_own = self.a_own.astype(float)
        a_cot = self.a_cotwin.astype(float)
        cols.update(a_own=a_own, a_cotwin=a_cot, a_bar=(a_own + a_cot) / 2,
                    y_own=self.y_own, own_index=self.own_index.astype(float))
        for v in cols.values():
            v.flags.writeable = False
        return cols


def _stack(ds: PairedDataset) -> StackedRows:
    w = None if ds.weights is None else np.concatenate([ds.weights, ds.weights])
    return StackedRows(
        pair_ids=np.concatenate([ds.pair_ids, ds.pair_ids]),
        own_index=np.repeat(np.array([1, 2]), ds.n),
        c=np.vstack([ds.c, ds.c]),
        x_own=np.vstack([ds.x1, ds.x2]), x_cotwin=np.vstack([ds.x2, ds.x1]),
        a_own=np.concatenate([ds.a1, ds.a2]), a_cotwin=np.concatenate([ds.a2, ds.a1]),
        y_own=np.concatenate([ds.y1, ds.y2]),
        c_names=ds.c_names, x_names=ds.x_names, weights=w)


def stack(ds: PairedDataset) -> StackedRows:
    """Twin-level rows for symmetric nuisance fitting (cached on the dataset)."""
    return ds.stacked


def unstack(rows: StackedRows, zygosity_column: str | None = None) -> PairedDataset:
    """Inverse of :func:`stack`; checks that the two halves mirror each other."""
    n = rows.n_pairs
    if len(rows) != 2 * n or not (np.all(rows.own_index[:n] == 1) and np.all(rows.own_index[n:] == 2)):
        raise SchemaError("stacked rows must hold all Twin 1 rows followed by all Twin 2 rows")
    first, second = slice(0, n), slice(n, 2 * n)
    mirrored = (np.array_equal(rows.pair_ids[first], rows.pair_ids[second])
                and np.array_equal(rows.c[first], rows.c[second])
                and np.array_equal(rows.x_own[first], rows.x_cotwin[second])
                and np.array_equal(rows.x_cotwin[first], rows.x_own[second])
                and np.array_equal(rows.a_own[first], rows.a_cotwin[second])
                and np.array_equal(rows.a_cotwin[first], rows.a_own[second]))
    if not mirrored:
        raise SchemaError("Twin 1 and Twin 2 rows are not mirror images")
    return PairedDataset(pair_ids=rows.pair_ids[first], c=rows.c[first], x1=rows.x_own[first],
                         x2=rows.x_own[second], a1=rows.a_own[first], a2=rows.a_own[second],
                         y1=rows.y_own[first], y2=rows.y_own[second], c_names=rows.c_names,
                         x_names=rows.x_names, zygosity_column=zygosity_column,
                         weights=None if rows.weights is None else rows.weights[first])
