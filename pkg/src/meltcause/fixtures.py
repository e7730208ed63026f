"""Synthetic furnace trace in the foundry schema, with known cycle boundaries and clusters.

The trace alternates idle gaps and melting cycles. Each cycle's temperature
rises through the start threshold, holds a melt plateau and cools below the
end threshold, so the true boundaries under the default segmentation rules
are known by construction. Inside a cycle:

* voltage follows an AR(1) process around a cluster-specific level,
* power responds to voltage at lag 0, current is power over voltage,
* temperature integrates lagged power,
* the per-cycle energy counter accumulates power, specific energy divides it by the charge weight,
* cooling-water temperature follows voltage three steps (30 s) later.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .dataset import FOUNDRY_SCHEMA
from .graph import CausalGraph, Link

# relative sizes follow the published cluster cardinalities, scaled down
DEFAULT_COUNTS = (24, 8, 8, 7, 6, 5, 5)


@dataclass(frozen=True)
class ClusterProfile:
    duration_rows: int
    weight_kg: float
    voltage: float
    peak_temp: float


PROFILES = (
    ClusterProfile(220, 9700.0, 900.0, 1450.0),
    ClusterProfile(260, 10400.0, 950.0, 1480.0),
    ClusterProfile(300, 11200.0, 870.0, 1500.0),
    ClusterProfile(240, 8800.0, 1000.0, 1430.0),
    ClusterProfile(280, 12000.0, 920.0, 1520.0),
    ClusterProfile(200, 8200.0, 980.0, 1470.0),
    ClusterProfile(320, 12600.0, 860.0, 1540.0),
)


@dataclass(frozen=True)
class FixtureTruth:
    boundaries: tuple[tuple[int, int], ...]
    clusters: tuple[int, ...]


def _cycle(rng: np.random.Generator, prof: ClusterProfile, energy0: float) -> tuple[np.ndarray, float]:
    n = prof.duration_rows + int(rng.integers(-15, 16))
    out = np.full((n, 12), np.nan)
    v = np.empty(n)
    v[0] = prof.voltage
    for t in range(1, n):
        v[t] = prof.voltage + 0.7 * (v[t - 1] - prof.voltage) + 25.0 * rng.standard_normal()
    power = 0.5 * v + 20.0 * rng.standard_normal(n)
    current = 1000.0 * power / v + 5.0 * rng.standard_normal(n)

    # temperature: start at 210 (just above the start threshold), heat, hold, cool to 290
    heat, cool = int(0.45 * n), int(0.2 * n)
    temp = np.empty(n)
    temp[0] = 210.0
    for t in range(1, heat):
        temp[t] = temp[t - 1] + (prof.peak_temp - 210.0) / heat * (power[t - 1] / (0.5 * prof.voltage)) + rng.normal(0, 3)
    hold = n - heat - cool
    temp[heat : heat + hold] = temp[heat - 1] + 0.02 * (power[heat - 1 : heat + hold - 1] - 0.5 * prof.voltage) + rng.normal(0, 3, hold)
    temp[heat + hold :] = np.linspace(temp[heat + hold - 1], 320.0, cool) + rng.normal(0, 2, cool)
    temp = np.maximum(temp, 305.0)
    temp[0] = 210.0
    temp = np.append(temp, 290.0)  # first row below the end threshold, excluded from the cycle

    charge = int(0.1 * n)
    weight = np.minimum(np.arange(1, n + 1) / charge, 1.0) * prof.weight_kg * rng.uniform(0.95, 1.05)
    energy = energy0 + np.cumsum(power) * 10.0 / 3600.0
    cooling = np.empty(n)
    cooling[:3] = 30.0
    cooling[3:] = 30.0 + 0.01 * (v[:-3] - prof.voltage) + 0.1 * rng.standard_normal(n - 3)

    out[:, 0] = weight
    out[:, 2] = temp[:n]
    out[:, 3] = 500.0 + 0.05 * power + rng.normal(0, 2, n)
    out[:, 4] = v
    out[:, 5] = current
    out[:, 6] = 1000.0 + rng.normal(0, 10, n)
    out[:, 7] = energy
    out[:, 8] = (energy - energy0) / (weight / 1000.0)
    out[:, 9] = power
    out[:, 10] = cooling
    out[:, 11] = 120.0 + 0.05 * (cooling - 30.0) * 100 + rng.normal(0, 1, n)
    return out, temp[n]


def _idle(rng: np.random.Generator, rows: int, energy: float) -> np.ndarray:
    out = np.full((rows, 12), np.nan)
    out[:, 0] = 0.0
    out[:, 2] = 100.0 + rng.normal(0, 5, rows)
    out[:, 3] = 0.0
    out[:, 4] = rng.normal(0, 1, rows)
    out[:, 5] = rng.normal(0, 1, rows)
    out[:, 6] = 1000.0 + rng.normal(0, 10, rows)
    out[:, 7] = energy
    out[:, 8] = 0.0
    out[:, 9] = 0.0
    out[:, 10] = 25.0 + rng.normal(0, 0.1, rows)
    out[:, 11] = 120.0 + rng.normal(0, 1, rows)
    return out


def furnace_trace(counts=DEFAULT_COUNTS, seed: int = 0) -> tuple[np.ndarray, FixtureTruth]:
    """Rows of the 12-column foundry schema plus the true boundaries and cluster per cycle.

    Cycles of different clusters are interleaved in a seeded random order.
    The ``State`` column is observed on well under 1% of rows.
    """
    if len(counts) > len(PROFILES):
        raise ValueError(f"at most {len(PROFILES)} clusters are defined")
    rng = np.random.default_rng(seed)
    order = np.concatenate([np.full(c, k) for k, c in enumerate(counts)])
    rng.shuffle(order)
    blocks, bounds = [], []
    row, energy = 0, 0.0
    for k in order:
        gap = _idle(rng, int(rng.integers(40, 60)), energy)
        blocks.append(gap)
        row += len(gap)
        # the counter restarts with each cycle
        cyc, end_temp = _cycle(rng, PROFILES[k], float(rng.uniform(0.0, 5.0)))
        energy = float(cyc[-1, 7])
        blocks.append(cyc)
        bounds.append((row, row + len(cyc)))
        row += len(cyc)
        tail = _idle(rng, 1, energy)
        tail[0, 2] = end_temp
        blocks.append(tail)
        row += 1
    blocks.append(_idle(rng, 40, energy))
    data = np.vstack(blocks)
    state = np.full(len(data), np.nan)
    state[::250] = 1.0
    data[:, 1] = state
    return data, FixtureTruth(tuple(bounds), tuple(int(k) for k in order))


def write_fixture(directory: str | os.PathLike, counts=DEFAULT_COUNTS, seed: int = 0) -> dict[str, str]:
    """Write ``trace.csv``, ``labels.csv`` and ``pipeline.toml`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    data, truth = furnace_trace(counts, seed)
    trace = os.path.join(directory, "trace.csv")
    with open(trace, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + [v.name for v in FOUNDRY_SCHEMA])
        for r, row in enumerate(data):
            w.writerow([r * 10] + ["" if np.isnan(x) else repr(round(float(x), 6)) for x in row])
    labels = os.path.join(directory, "labels.csv")
    with open(labels, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle_id", "cluster"])
        for cid, k in enumerate(truth.clusters):
            w.writerow([cid, k])
    config = os.path.join(directory, "pipeline.toml")
    with open(config, "w") as fh:
        fh.write(FIXTURE_CONFIG)
    return {"trace": trace, "labels": labels, "config": config}


FIXTURE_CONFIG = """\
seed = 7
jobs = 1

[paths]
input = "trace.csv"
labels = "labels.csv"
output = "out"

[data]
sample_interval_s = 10.0
max_missing_fraction = 0.99
variables = [3, 5, 8, 10, 11]

[roles]
temperature = 3
energy = 8
weight = 1

[segmentation]
start_temp_c = 200.0
end_temp_c = 300.0
min_duration_s = 1800.0
max_duration_s = 10800.0
refractory_s = 300.0

[sampling]
fraction = 0.2
emd_threshold = 0.5
mmd_threshold = 0.2
max_retries = 20

[discovery]
tau_max = 3
pc_alpha = 0.05
mci_alpha = 0.05
max_conds_dim = 2
tests = ["RobustParCorr", "ParCorrWLS", "GPDC", "CMIknn"]

[discovery.params.GPDC]
permutations = 50

[discovery.params.CMIknn]
permutations = 50
k = 10

[compare]
graph = "hybrid"
min_common = 2
"""


# Published causal-pair incidences across seven clusters, distributed so the
# per-cluster statements that accompany the table hold (e.g. cluster 0 has
# 3->8, 3->9 and 1->3; cluster 6 has 9->1).
PUBLISHED_PAIR_CLUSTERS: dict[tuple[int, int], tuple[int, ...]] = {
    (5, 11): (0, 1, 2, 3, 5, 6),
    (3, 9): (0, 1, 2, 3, 5),
    (8, 9): (1, 2, 3, 4, 5),
    (1, 3): (0, 2, 5, 6),
    (8, 3): (2, 4, 5, 6),
    (3, 8): (0, 1, 3),
    (8, 1): (3, 4, 5),
    (1, 9): (1, 4),
    (3, 11): (2, 5),
    (4, 11): (1, 3),
    (5, 12): (0, 4),
    (9, 11): (2, 6),
    (10, 6): (0, 3),
    (10, 11): (1, 6),
    (12, 11): (4, 6),
    (1, 7): (0,),
    (1, 8): (1,),
    (3, 10): (5,),
    (4, 6): (2,),
    (4, 8): (3,),
    (5, 3): (4,),
    (5, 10): (6,),
    (6, 1): (0,),
    (6, 11): (1,),
    (8, 11): (2,),
    (9, 1): (6,),
    (10, 5): (3,),
}


def published_pair_graphs(lag_unit_s: float = 10.0) -> dict[int, CausalGraph]:
    """Seven hybrid-style graphs whose pair frequencies reproduce the published table.

    The voltage -> cooling-water-temperature link sits at lag 3 (lag 4 in
    one cluster); every other link is at lag 1.
    """
    variables = tuple(v for v in FOUNDRY_SCHEMA if v.name != "State")
    links: dict[int, list[Link]] = {c: [] for c in range(7)}
    for (a, b), clusters in PUBLISHED_PAIR_CLUSTERS.items():
        for c in clusters:
            lag = (4 if c == 6 else 3) if (a, b) == (5, 11) else 1
            links[c].append(Link(a, b, lag, 0.5, 0.001))
    return {c: CausalGraph(variables, ls, lag_unit_s, tau_max=5) for c, ls in links.items()}


def write_published_pair_graphs(output_dir: str | os.PathLike, name: str = "hybrid") -> None:
    """Lay the fixture graphs out as ``graphs/cluster_<c>/<name>.json`` under ``output_dir``."""
    for c, g in published_pair_graphs().items():
        d = os.path.join(output_dir, "graphs", f"cluster_{c}")
        os.makedirs(d, exist_ok=True)
        with open(os.path.join(d, f"{name}.json"), "w") as fh:
            fh.write(g.to_json())
