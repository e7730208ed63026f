"""Melting-cycle segmentation, per-cycle statistics and cluster labels."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset import TimeSeriesDataset
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class SegmentationRules:
    """Threshold/time heuristics for splitting a furnace trace into cycles.

    A cycle starts when temperature rises above ``start_temp_c`` from below.
    It ends on the first sample below ``end_temp_c`` after the trace has
    reached ``end_temp_c`` (the end row itself is excluded). A new start
    cannot trigger within ``refractory_s`` of the previous end.
    """

    start_temp_c: float = 200.0
    end_temp_c: float = 300.0
    min_duration_s: float = 1800.0
    max_duration_s: float = 10800.0
    refractory_s: float = 300.0

    def __post_init__(self):
        if not self.min_duration_s > 0 or not self.max_duration_s > 0:
            raise ConfigError("durations must be positive")
        if self.min_duration_s >= self.max_duration_s:
            raise ConfigError("min_duration_s must be smaller than max_duration_s")
        if self.refractory_s < 0:
            raise ConfigError("refractory_s must be non-negative")


@dataclass(frozen=True)
class CycleStats:
    production_time_s: float
    weight_tonne: float
    energy_kwh: float
    specific_energy_kwh_per_tonne: float

    def vector(self) -> np.ndarray:
        return np.array(
            [self.production_time_s, self.energy_kwh, self.specific_energy_kwh_per_tonne, self.weight_tonne]
        )


STAT_FEATURES = ("production_time", "energy", "specific_energy", "weight")


@dataclass(frozen=True)
class MeltingCycle:
    id: int
    start_row: int
    end_row: int
    stats: CycleStats | None = None
    cluster: int | None = None

    @property
    def sample_range(self) -> tuple[int, int]:
        return (self.start_row, self.end_row)

    def __len__(self) -> int:
        return self.end_row - self.start_row


class SegmentationResult(list):
    """List of cycles that also remembers how many candidate cycles were discarded."""

    def __init__(self, cycles=(), discarded=0, discard_reasons=None):
        super().__init__(cycles)
        self.discarded = discarded
        self.discard_reasons = list(discard_reasons or [])


@dataclass(frozen=True)
class ClusterPartition:
    assignments: dict[int, int]
    k: int

    def __post_init__(self):
        labels = set(self.assignments.values())
        if labels and min(labels) < 0:
            raise DataError("cluster labels must be non-negative")
        if len(labels) > self.k:
            raise DataError(f"{len(labels)} distinct labels but k={self.k}")

    @property
    def labels(self) -> list[int]:
        return sorted(set(self.assignments.values()))

    def members(self, label: int) -> list[int]:
        return sorted(c for c, lab in self.assignments.items() if lab == label)


def segment_cycles(ds: TimeSeriesDataset, rules: SegmentationRules, temp_var: int | str) -> SegmentationResult:
    """Scan the temperature column and return the cycles that satisfy ``rules``.

    Masked temperature samples neither start nor end a cycle. Candidate
    cycles outside the duration bounds, or still open at the end of the
    trace, are discarded and counted.
    """
    try:
        col = ds.column_of(temp_var)
    except KeyError as exc:
        raise DataError(f"temperature variable {temp_var!r} not in dataset") from exc
    if not ds.mask[:, col].any():
        raise DataError("temperature variable has no observed values")

    temp = ds.values[:, col]
    dt = ds.sample_interval_s
    refractory_rows = int(math.ceil(rules.refractory_s / dt))

    cycles, reasons = [], []
    prev = math.nan
    start = None
    armed = False
    blocked_until = 0
    for t in range(ds.T):
        cur = temp[t]
        if not ds.mask[t, col]:
            continue
        if start is None:
            if t >= blocked_until and not math.isnan(prev) and prev <= rules.start_temp_c < cur:
                start, armed = t, cur >= rules.end_temp_c
        else:
            if cur >= rules.end_temp_c:
                armed = True
            elif armed:
                duration = (t - start) * dt
                if duration < rules.min_duration_s:
                    reasons.append(f"rows {start}-{t}: shorter than min_duration_s")
                elif duration > rules.max_duration_s:
                    reasons.append(f"rows {start}-{t}: longer than max_duration_s")
                else:
                    cycles.append((start, t))
                start, armed = None, False
                blocked_until = t + refractory_rows
        prev = cur
    if start is not None:
        reasons.append(f"rows {start}-{ds.T}: cycle still open at end of trace")

    out = [MeltingCycle(id=i, start_row=s, end_row=e) for i, (s, e) in enumerate(cycles)]
    return SegmentationResult(out, discarded=len(reasons), discard_reasons=reasons)


def _tonne_factor(unit: str) -> float:
    return 1e-3 if unit.strip().lower() == "kg" else 1.0


def compute_cycle_stats(ds: TimeSeriesDataset, cycle: MeltingCycle, var_map: Mapping[str, int | str]) -> CycleStats:
    """Production time, charged weight, consumed energy and specific energy of one cycle.

    ``var_map`` maps the roles ``"energy"`` and ``"weight"`` to variable ids
    or names. Must run on raw (unstandardized) values. Weight in kg is
    converted to tonnes based on the variable unit.
    """
    for role in ("energy", "weight"):
        if role not in var_map:
            raise DataError(f"var_map lacks the {role!r} role")
    s, e = cycle.start_row, cycle.end_row
    production = (e - s) * ds.sample_interval_s
    if production <= 0:
        raise DataError(f"cycle {cycle.id} has an empty sample range")

    ecol = ds.column_of(var_map["energy"])
    energy_obs = ds.values[s:e, ecol][ds.mask[s:e, ecol]]
    if energy_obs.size == 0:
        raise DataError(f"cycle {cycle.id} has no observed energy readings")
    energy = float(energy_obs.max() - energy_obs[0])
    if energy < 0:
        # counter reset mid-cycle
        energy = float(energy_obs.max())

    wcol = ds.column_of(var_map["weight"])
    weight_obs = ds.values[s:e, wcol][ds.mask[s:e, wcol]]
    weight = float(weight_obs.max()) * _tonne_factor(ds.variables[wcol].unit) if weight_obs.size else 0.0
    if not weight > 0:
        raise DataError(f"cycle {cycle.id}: weight {weight} <= 0, specific energy undefined")
    return CycleStats(production, weight, energy, energy / weight)


def attach_stats(ds: TimeSeriesDataset, cycles: Sequence[MeltingCycle], var_map) -> list[MeltingCycle]:
    return [replace(c, stats=compute_cycle_stats(ds, c, var_map)) for c in cycles]


def apply_partition(cycles: Sequence[MeltingCycle], partition: ClusterPartition) -> list[MeltingCycle]:
    return [replace(c, cluster=partition.assignments[c.id]) for c in cycles]


def ingest_cluster_labels(path: str | os.PathLike, cycles: Sequence[MeltingCycle]) -> ClusterPartition:
    """Read a ``cycle_id,cluster`` CSV and check it covers exactly the given cycles."""
    if not os.path.exists(path):
        raise DataError(f"label file not found: {path}")
    assignments: dict[int, int] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            assignments[int(row["cycle_id"])] = int(row["cluster"])
    return partition_from_labels(assignments, cycles)


def partition_from_labels(assignments: Mapping[int, int], cycles: Sequence[MeltingCycle]) -> ClusterPartition:
    ids = {c.id for c in cycles}
    unknown = sorted(set(assignments) - ids)
    if unknown:
        raise DataError(f"label file references unknown cycle ids {unknown[:10]}")
    missing = sorted(ids - set(assignments))
    if missing:
        raise DataError(f"label file misses cycle ids {missing[:10]}")
    # labels are kept verbatim (they name clusters downstream); k counts distinct labels
    return ClusterPartition(dict(sorted(assignments.items())), k=len(set(assignments.values())))


def export_cluster_labels(partition: ClusterPartition, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle_id", "cluster"])
        for cid, lab in sorted(partition.assignments.items()):
            w.writerow([cid, lab])


def _profile(ds: TimeSeriesDataset, cycle: MeltingCycle, col: int, profile_len: int) -> np.ndarray:
    s, e = cycle.start_row, cycle.end_row
    obs = ds.mask[s:e, col]
    if obs.sum() < 2:
        raise DataError(f"cycle {cycle.id} has fewer than 2 observed temperature points")
    pos = np.arange(e - s)[obs] / max(e - s - 1, 1)
    return np.interp(np.linspace(0.0, 1.0, profile_len), pos, ds.values[s:e, col][obs])


def baseline_cluster(
    cycles: Sequence[MeltingCycle],
    ds: TimeSeriesDataset,
    k: int,
    profile_len: int = 64,
    seed: int = 0,
    temp_var: int | str = 3,
) -> ClusterPartition:
    """k-means on length-normalised temperature profiles.

    A reproducible stand-in for an external clustering; labels are renumbered
    by first appearance in cycle order so they do not depend on the solver's
    internal numbering.
    """
    from sklearn.cluster import KMeans

    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > len(cycles):
        raise ConfigError(f"k={k} exceeds the number of cycles ({len(cycles)})")
    col = ds.column_of(temp_var)
    X = np.vstack([_profile(ds, c, col, profile_len) for c in cycles])
    if k == 1:
        raw = np.zeros(len(cycles), dtype=int)
    else:
        raw = KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed).fit_predict(X)
    order: dict[int, int] = {}
    for lab in raw:
        order.setdefault(int(lab), len(order))
    return ClusterPartition({c.id: order[int(lab)] for c, lab in zip(cycles, raw)}, k=k)


CYCLE_INDEX_COLUMNS = (
    "cycle_id",
    "start_row",
    "end_row",
    "production_time_s",
    "weight_tonne",
    "energy_kwh",
    "specific_energy_kwh_per_tonne",
    "cluster",
)


def cycle_index_text(cycles: Sequence[MeltingCycle]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CYCLE_INDEX_COLUMNS)
    for c in cycles:
        st = c.stats
        w.writerow(
            [
                c.id,
                c.start_row,
                c.end_row,
                repr(st.production_time_s) if st else "",
                repr(st.weight_tonne) if st else "",
                repr(st.energy_kwh) if st else "",
                repr(st.specific_energy_kwh_per_tonne) if st else "",
                "" if c.cluster is None else c.cluster,
            ]
        )
    return buf.getvalue()


def write_cycle_index(cycles: Sequence[MeltingCycle], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(cycle_index_text(cycles))


def read_cycle_index(path: str | os.PathLike) -> list[MeltingCycle]:
    if not os.path.exists(path):
        raise DataError(f"cycle index not found: {path}")
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            stats = None
            if row["production_time_s"]:
                stats = CycleStats(
                    float(row["production_time_s"]),
                    float(row["weight_tonne"]),
                    float(row["energy_kwh"]),
                    float(row["specific_energy_kwh_per_tonne"]),
                )
            out.append(
                MeltingCycle(
                    id=int(row["cycle_id"]),
                    start_row=int(row["start_row"]),
                    end_row=int(row["end_row"]),
                    stats=stats,
                    cluster=int(row["cluster"]) if row["cluster"] != "" else None,
                )
            )
    return out
