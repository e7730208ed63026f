"""Multivariate furnace time series: loading, sparse-variable removal, z-scoring.

Missing cells are carried in a boolean mask (``True`` = observed) and are
never imputed; the corresponding entries of ``values`` hold NaN.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, EmptyDatasetError, SchemaMismatchError

ROLES = ("process", "energy", "auxiliary")


@dataclass(frozen=True)
class VariableMeta:
    index: int
    name: str
    unit: str = ""
    role: str = "process"

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be non-empty")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if int(self.index) < 1:
            raise ValueError("variable index is 1-based")


# Original numbering is kept after 'State' is dropped, so pair ids line up
# with the published causal-pair table.
FOUNDRY_SCHEMA: tuple[VariableMeta, ...] = (
    VariableMeta(1, "Weight", "kg", "process"),
    VariableMeta(2, "State", "bit", "auxiliary"),
    VariableMeta(3, "Temperature", "degC", "process"),
    VariableMeta(4, "Frequency", "Hz", "process"),
    VariableMeta(5, "Voltage", "V", "energy"),
    VariableMeta(6, "Current", "A", "energy"),
    VariableMeta(7, "Isolation resistance", "kOhm", "auxiliary"),
    VariableMeta(8, "Energy act", "kWh", "energy"),
    VariableMeta(9, "Energy specific", "kWh/tonne", "energy"),
    VariableMeta(10, "Power", "kW", "energy"),
    VariableMeta(11, "Cooling water temperature", "degC", "auxiliary"),
    VariableMeta(12, "Cooling water quantity", "L/min", "auxiliary"),
)


def _check_schema(variables: Sequence[VariableMeta]) -> None:
    idx = [v.index for v in variables]
    if len(set(idx)) != len(idx):
        raise SchemaMismatchError("variable indices must be unique")
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise SchemaMismatchError("variable names must be unique")


@dataclass(frozen=True)
class TimeSeriesDataset:
    """T x N sample matrix with observation mask and variable metadata."""

    values: np.ndarray
    mask: np.ndarray
    variables: tuple[VariableMeta, ...]
    sample_interval_s: float = 10.0
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2:
            raise DataError("values must be a 2-D array")
        if values.shape != mask.shape:
            raise DataError(f"values {values.shape} and mask {mask.shape} differ in shape")
        if values.shape[1] != len(self.variables):
            raise DataError("number of columns does not match the variable list")
        if not self.sample_interval_s > 0:
            raise DataError("sample_interval_s must be positive")
        _check_schema(self.variables)
        values = np.where(mask, values, np.nan)
        values.flags.writeable = False
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def column_of(self, var: int | str) -> int:
        """Column position of a variable given its 1-based id or its name."""
        for pos, v in enumerate(self.variables):
            if (isinstance(var, str) and v.name == var) or (
                not isinstance(var, str) and v.index == int(var)
            ):
                return pos
        raise KeyError(f"variable {var!r} not in dataset")

    def select(self, variables: Iterable[int | str]) -> "TimeSeriesDataset":
        cols = [self.column_of(v) for v in variables]
        return replace(
            self,
            values=self.values[:, cols],
            mask=self.mask[:, cols],
            variables=tuple(self.variables[c] for c in cols),
        )

    def rows(self, start: int, stop: int) -> "TimeSeriesDataset":
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return replace(self, values=self.values[start:stop], mask=self.mask[start:stop], timestamps=ts)


@dataclass
class StandardizationReport:
    means: dict[str, float] = field(default_factory=dict)
    stds: dict[str, float] = field(default_factory=dict)
    variables_dropped: list[tuple[str, str]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "means": self.means,
                "stds": self.stds,
                "variables_dropped": [{"name": n, "reason": r} for n, r in self.variables_dropped],
            },
            indent=2,
            sort_keys=True,
        )


def _parse_timestamp(cell: str) -> float:
    cell = cell.strip()
    try:
        return float(int(cell))
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(cell).timestamp()
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {cell!r}") from exc


def _parse_cell(cell: str) -> float:
    cell = cell.strip()
    if not cell:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        return math.nan


def load_csv(
    path: str | os.PathLike,
    schema: Sequence[VariableMeta],
    sample_interval_s: float = 10.0,
) -> TimeSeriesDataset:
    """Read a CSV with one header row of variable names and one row per sample.

    Empty or non-numeric cells become masked entries. An optional leading
    ``timestamp`` column must be strictly increasing. Extra columns not in
    ``schema`` are ignored.
    """
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    schema = tuple(schema)
    _check_schema(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = list(reader)

    missing = [v.name for v in schema if v.name not in header]
    if missing:
        raise SchemaMismatchError(f"CSV header lacks schema variables: {missing}")
    cols = [header.index(v.name) for v in schema]
    ts_col = header.index("timestamp") if "timestamp" in header else None

    values = np.full((len(rows), len(schema)), np.nan)
    stamps = np.empty(len(rows)) if ts_col is not None else None
    for r, row in enumerate(rows):
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        for c, src in enumerate(cols):
            values[r, c] = _parse_cell(row[src])
        if stamps is not None:
            stamps[r] = _parse_timestamp(row[ts_col])
    if stamps is not None and len(stamps) > 1 and np.any(np.diff(stamps) <= 0):
        raise DataError("timestamps are not strictly increasing")
    mask = np.isfinite(values)
    return TimeSeriesDataset(values, mask, schema, sample_interval_s, stamps)


def write_csv(ds: TimeSeriesDataset, path: str | os.PathLike) -> None:
    """Write ``ds`` so that :func:`load_csv` recovers identical values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.names)
        for r in range(ds.T):
            w.writerow(repr(float(x)) if m else "" for x, m in zip(ds.values[r], ds.mask[r]))


def drop_sparse_variables(
    ds: TimeSeriesDataset, max_missing_fraction: float = 0.99
) -> tuple[TimeSeriesDataset, StandardizationReport]:
    """Remove variables whose missing fraction exceeds ``max_missing_fraction``."""
    if not 0.0 <= max_missing_fraction <= 1.0:
        raise ValueError("max_missing_fraction must lie in [0, 1]")
    missing = 1.0 - ds.mask.mean(axis=0) if ds.T else np.ones(ds.N)
    keep = [i for i in range(ds.N) if missing[i] <= max_missing_fraction]
    report = StandardizationReport(
        variables_dropped=[
            (ds.variables[i].name, f"missing-fraction {missing[i]:.4f} > {max_missing_fraction}")
            for i in range(ds.N)
            if i not in keep
        ]
    )
    if not keep:
        raise EmptyDatasetError("every variable exceeds the missing-value threshold")
    return ds.select([ds.variables[i].index for i in keep]), report


def standardize(ds: TimeSeriesDataset) -> tuple[TimeSeriesDataset, StandardizationReport]:
    """Z-score each variable over its observed entries; drop zero-variance columns."""
    report = StandardizationReport()
    out = np.array(ds.values, copy=True)
    keep = []
    for i, var in enumerate(ds.variables):
        obs = ds.values[ds.mask[:, i], i]
        if obs.size < 2:
            raise DataError(f"variable {var.name!r} has fewer than 2 observed values")
        mu = float(obs.mean())
        sd = float(obs.std())
        if sd == 0.0 or not np.isfinite(sd):
            report.variables_dropped.append((var.name, "zero-variance"))
            continue
        keep.append(i)
        report.means[var.name] = mu
        report.stds[var.name] = sd
        out[:, i] = (ds.values[:, i] - mu) / sd
    if not keep:
        raise EmptyDatasetError("every variable has zero variance")
    return (
        replace(
            ds,
            values=out[:, keep],
            mask=ds.mask[:, keep],
            variables=tuple(ds.variables[i] for i in keep),
        ),
        report,
    )


def aggregate_sensor_mean(ds: TimeSeriesDataset, sources: Sequence[int | str], target: VariableMeta) -> TimeSeriesDataset:
    """Replace several sensor columns by their per-row mean over observed entries.

    Used for the cooling-water readings that come from several locations.
    """
    cols = [ds.column_of(s) for s in sources]
    vals = ds.values[:, cols]
    count = ds.mask[:, cols].sum(axis=1)
    with np.errstate(invalid="ignore"):
        mean = np.where(count > 0, np.nansum(vals, axis=1) / np.maximum(count, 1), np.nan)
    keep = [i for i in range(ds.N) if i not in cols]
    values = np.column_stack([ds.values[:, keep], mean])
    mask = np.column_stack([ds.mask[:, keep], count > 0])
    variables = tuple(ds.variables[i] for i in keep) + (target,)
    return replace(ds, values=values, mask=mask, variables=variables)
