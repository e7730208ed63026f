"""Representative-subset selection for one cluster of melting cycles.

Flow: drop cycle-level outliers (IQR fences), draw a random subset without
replacement, compare it with the full cluster per feature (1-D Wasserstein)
and jointly (Gaussian-kernel MMD), redraw until both thresholds hold, then
concatenate the chosen cycles into one sequence with recorded junctions.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, cdist
from scipy.stats import wasserstein_distance

from ._seeding import stable_mix
from .dataset import TimeSeriesDataset
from .errors import ConfigError, DataError
from .segmentation import STAT_FEATURES, MeltingCycle

OUTLIER_FEATURES = ("production_time", "energy", "specific_energy")


@dataclass(frozen=True)
class SamplerConfig:
    fraction: float = 0.05
    emd_threshold: float = 0.10
    mmd_threshold: float = 0.05
    max_retries: int = 20
    iqr_multiplier: float = 1.5
    seed: int = 0
    features: tuple[str, ...] = STAT_FEATURES

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ConfigError("fraction must lie in (0, 1]")
        if not (self.emd_threshold > 0 and self.mmd_threshold > 0):
            raise ConfigError("thresholds must be positive")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")
        if not self.iqr_multiplier > 0:
            raise ConfigError("iqr_multiplier must be positive")
        unknown = set(self.features) - set(STAT_FEATURES)
        if unknown:
            raise ConfigError(f"unknown cycle features {sorted(unknown)}")


@dataclass
class ValidationReport:
    emd: dict[str, float]
    mmd: float
    passed: bool
    retries_used: int
    emd_threshold: float
    mmd_threshold: float
    cluster: int | None = None
    selected_ids: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cluster": self.cluster,
            "emd": self.emd,
            "mmd": self.mmd,
            "emd_threshold": self.emd_threshold,
            "mmd_threshold": self.mmd_threshold,
            "pass": self.passed,
            "retries_used": self.retries_used,
            "n_selected": len(self.selected_ids),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class RepresentativeSequence:
    data: TimeSeriesDataset
    boundary_rows: tuple[int, ...]
    provenance: tuple[tuple[int | None, int], ...]

    def __post_init__(self):
        b = self.boundary_rows
        if any(x >= y for x, y in zip(b, b[1:])):
            raise DataError("boundary_rows must be strictly increasing")
        if b and (b[0] < 1 or b[-1] >= self.data.T):
            raise DataError("boundary_rows must lie within [1, T)")


_FEATURE_ATTR = {
    "production_time": "production_time_s",
    "energy": "energy_kwh",
    "specific_energy": "specific_energy_kwh_per_tonne",
    "weight": "weight_tonne",
}


def feature_matrix(cycles: Sequence[MeltingCycle], features: Sequence[str] = STAT_FEATURES) -> np.ndarray:
    if any(c.stats is None for c in cycles):
        raise DataError("every cycle needs statistics before sampling")
    return np.array([[getattr(c.stats, _FEATURE_ATTR[f]) for f in features] for c in cycles], dtype=float)


def remove_outlier_cycles(
    cycles: Sequence[MeltingCycle], config: SamplerConfig = SamplerConfig()
) -> tuple[list[MeltingCycle], list[tuple[MeltingCycle, str]]]:
    """Drop cycles whose duration, energy or specific energy falls outside the IQR fences.

    Returns the kept cycles (input order) and ``(cycle, feature)`` pairs for
    the removed ones, naming the first violating feature.
    """
    if len(cycles) < 4:
        raise DataError("outlier removal needs at least 4 cycles")
    X = feature_matrix(cycles, OUTLIER_FEATURES)
    q1, q3 = np.percentile(X, [25, 75], axis=0)
    iqr = q3 - q1
    m = config.iqr_multiplier
    with np.errstate(invalid="ignore"):
        lo, hi = q1 - m * iqr, q3 + m * iqr
    kept, removed = [], []
    for c, row in zip(cycles, X):
        bad = [f for f, v, a, b in zip(OUTLIER_FEATURES, row, lo, hi) if v < a or v > b]
        if bad:
            removed.append((c, bad[0]))
        else:
            kept.append(c)
    return kept, removed


def emd_1d(a, b) -> float:
    """1-Wasserstein distance between two empirical distributions on the line."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("emd_1d needs two non-empty samples")
    return float(wasserstein_distance(a, b))


def median_bandwidth(pooled: np.ndarray) -> float:
    if len(pooled) < 2:
        return 1.0
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def mmd_squared(a, b, bandwidth: float | str = "median") -> float:
    """Biased (V-statistic) squared MMD with a Gaussian kernel ``exp(-d^2 / (2 h^2))``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("mmd_squared needs two non-empty samples")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if bandwidth == "median":
        h = median_bandwidth(np.vstack([a, b]))
    else:
        h = float(bandwidth)
        if not h > 0:
            raise ValueError("bandwidth must be positive")
    g = -0.5 / h**2
    kaa = np.exp(g * cdist(a, a, "sqeuclidean")).mean()
    kbb = np.exp(g * cdist(b, b, "sqeuclidean")).mean()
    kab = np.exp(g * cdist(a, b, "sqeuclidean")).mean()
    return float(max(kaa + kbb - 2.0 * kab, 0.0))


def _zscore_against(full: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = full.mean(axis=0)
    sd = full.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def validate_subset(full: np.ndarray, idx: np.ndarray, config: SamplerConfig) -> tuple[dict[str, float], float]:
    mu, sd = _zscore_against(full)
    Z = (full - mu) / sd
    sub = Z[idx]
    emd = {f: emd_1d(sub[:, j], Z[:, j]) for j, f in enumerate(config.features)}
    return emd, mmd_squared(sub, Z)


def sample_and_validate(
    cluster_cycles: Sequence[MeltingCycle],
    ds: TimeSeriesDataset | None = None,
    config: SamplerConfig = SamplerConfig(),
) -> tuple[list[MeltingCycle], ValidationReport]:
    """Draw ``ceil(fraction * n)`` cycles and validate them against the whole cluster.

    Draw ``i`` uses ``stable_mix(config.seed, i)``. If no draw passes within
    ``max_retries`` attempts, the draw with the smallest worst-case
    metric/threshold ratio is returned with ``passed=False``. ``ds`` is not
    needed for the cycle-level metrics and is accepted for interface symmetry
    with :func:`concatenate`.
    """
    n = len(cluster_cycles)
    if n == 0:
        raise DataError("cannot sample from an empty cluster")
    m = max(1, math.ceil(config.fraction * n - 1e-9))
    full = feature_matrix(cluster_cycles, config.features)

    best = None
    for attempt in range(config.max_retries):
        rng = np.random.default_rng(stable_mix(config.seed, attempt))
        idx = np.sort(rng.choice(n, size=m, replace=False))
        emd, mmd = validate_subset(full, idx, config)
        score = max(max(emd.values()) / config.emd_threshold, mmd / config.mmd_threshold)
        passed = all(v <= config.emd_threshold for v in emd.values()) and mmd <= config.mmd_threshold
        if best is None or score < best[0]:
            best = (score, idx, emd, mmd, attempt)
        if passed:
            best = (score, idx, emd, mmd, attempt)
            break
    _, idx, emd, mmd, attempt = best
    passed = all(v <= config.emd_threshold for v in emd.values()) and mmd <= config.mmd_threshold
    selected = [cluster_cycles[i] for i in idx]
    report = ValidationReport(
        emd=emd,
        mmd=mmd,
        passed=passed,
        retries_used=attempt if passed else config.max_retries,
        emd_threshold=config.emd_threshold,
        mmd_threshold=config.mmd_threshold,
        cluster=cluster_cycles[0].cluster,
        selected_ids=[c.id for c in selected],
    )
    return selected, report


def concatenate(selected: Sequence[MeltingCycle], ds: TimeSeriesDataset) -> RepresentativeSequence:
    """Stack the selected cycles' rows in the given order and record each junction."""
    if not selected:
        raise DataError("nothing to concatenate")
    parts_v, parts_m, bounds = [], [], []
    row = 0
    for c in selected:
        if row:
            bounds.append(row)
        parts_v.append(ds.values[c.start_row : c.end_row])
        parts_m.append(ds.mask[c.start_row : c.end_row])
        row += c.end_row - c.start_row
    data = TimeSeriesDataset(np.vstack(parts_v), np.vstack(parts_m), ds.variables, ds.sample_interval_s)
    return RepresentativeSequence(data, tuple(bounds), tuple((c.cluster, c.id) for c in selected))


def single_sequence(ds: TimeSeriesDataset) -> RepresentativeSequence:
    """Wrap an uninterrupted dataset as a sequence without junctions."""
    return RepresentativeSequence(ds, (), ())


def write_manifest(selected: Sequence[MeltingCycle], path: str | os.PathLike, cluster: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "cycle_id"])
        for c in selected:
            w.writerow([c.cluster if cluster is None else cluster, c.id])


def read_manifest(path: str | os.PathLike) -> list[tuple[int, int]]:
    with open(path, newline="") as fh:
        return [(int(r["cluster"]), int(r["cycle_id"])) for r in csv.DictReader(fh)]
