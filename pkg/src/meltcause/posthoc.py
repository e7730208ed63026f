"""Cross-cluster comparison of causal graphs: pair frequencies, shared links, lags."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping

from .errors import DataError
from .graph import CausalGraph

Pair = tuple[int, int]


@dataclass(frozen=True)
class PairRow:
    source: int
    target: int
    count: int
    clusters: tuple
    min_lag: int
    max_lag: int


@dataclass
class PairFrequencyTable:
    rows: list[PairRow]

    def __len__(self) -> int:
        return len(self.rows)

    def counts(self) -> dict[Pair, int]:
        return {(r.source, r.target): r.count for r in self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "target", "frequency", "clusters", "min_lag", "max_lag"])
        for r in self.rows:
            w.writerow([r.source, r.target, r.count, ";".join(str(c) for c in r.clusters), r.min_lag, r.max_lag])
        return buf.getvalue()

    def report(self) -> str:
        """Frequency-grouped pair listing, highest frequency first."""
        by_count: dict[int, list[Pair]] = defaultdict(list)
        for r in self.rows:
            by_count[r.count].append((r.source, r.target))
        lines = ["Occurrence frequency | Causal pairs"]
        for count in sorted(by_count, reverse=True):
            pairs = ", ".join(f"({a}, {b})" for a, b in by_count[count])
            lines.append(f"{count} | {pairs}")
        return "\n".join(lines) + "\n"


def _check_universe(graphs: Mapping[object, CausalGraph]) -> None:
    names: dict[int, str] = {}
    for g in graphs.values():
        for v in g.variables:
            if names.setdefault(v.index, v.name) != v.name:
                raise DataError(f"variable id {v.index} is {names[v.index]!r} in one graph and {v.name!r} in another")


def _pair_lags(graph: CausalGraph, include_unoriented: bool) -> dict[Pair, set[int]]:
    """Lags per directed pair; conflict edges count both ways, unoriented only on request."""
    out: dict[Pair, set[int]] = defaultdict(set)
    for l in graph.links:
        if l.source == l.target:
            continue
        if l.mark == "directed":
            out[(l.source, l.target)].add(l.lag)
        elif l.mark == "conflict" or include_unoriented:
            out[(l.source, l.target)].add(l.lag)
            out[(l.target, l.source)].add(l.lag)
    return out


def _sort_key(c):
    return (0, c, "") if isinstance(c, int) else (1, 0, str(c))


def pair_frequency(graphs: Mapping[object, CausalGraph], include_unoriented: bool = False) -> PairFrequencyTable:
    """Count, for each directed pair, the clusters whose graph links it at any lag.

    Rows are sorted by descending count, then by pair. Self-pairs are skipped.
    """
    _check_universe(graphs)
    clusters: dict[Pair, list] = defaultdict(list)
    lags: dict[Pair, set[int]] = defaultdict(set)
    for c in sorted(graphs, key=_sort_key):
        for pair, ls in _pair_lags(graphs[c], include_unoriented).items():
            clusters[pair].append(c)
            lags[pair] |= ls
    rows = [
        PairRow(a, b, len(clusters[(a, b)]), tuple(clusters[(a, b)]), min(lags[(a, b)]), max(lags[(a, b)]))
        for (a, b) in clusters
    ]
    rows.sort(key=lambda r: (-r.count, r.source, r.target))
    return PairFrequencyTable(rows)


def common_and_specific(
    graphs: Mapping[object, CausalGraph], min_common: int = 2, include_unoriented: bool = False
) -> tuple[list[Pair], dict[object, list[Pair]]]:
    if min_common < 2:
        raise ValueError("min_common must be >= 2")
    table = pair_frequency(graphs, include_unoriented)
    common = [(r.source, r.target) for r in table.rows if r.count >= min_common]
    specific: dict[object, list[Pair]] = {}
    for r in table.rows:
        if r.count == 1:
            specific.setdefault(r.clusters[0], []).append((r.source, r.target))
    return common, {c: sorted(v) for c, v in sorted(specific.items(), key=lambda kv: _sort_key(kv[0]))}


@dataclass(frozen=True)
class LagSummary:
    pair: Pair
    min_lag: int
    max_lag: int
    per_cluster: dict
    lag_unit_s: float

    @property
    def min_seconds(self) -> float:
        return self.min_lag * self.lag_unit_s

    @property
    def max_seconds(self) -> float:
        return self.max_lag * self.lag_unit_s

    def describe(self) -> str:
        a, b = self.pair
        return f"{a} -> {b}: lag {self.min_lag}..{self.max_lag} steps, at least {self.min_seconds:g} seconds"


def lag_summary(graphs: Mapping[object, CausalGraph], pair: Pair, include_unoriented: bool = False) -> LagSummary:
    per_cluster = {}
    unit = None
    for c in sorted(graphs, key=_sort_key):
        ls = _pair_lags(graphs[c], include_unoriented).get(tuple(pair))
        if ls:
            per_cluster[c] = sorted(ls)
            unit = graphs[c].lag_unit_s if unit is None else unit
    if not per_cluster:
        raise DataError(f"pair {tuple(pair)} does not appear in any graph")
    all_lags = [l for ls in per_cluster.values() for l in ls]
    return LagSummary(tuple(pair), min(all_lags), max(all_lags), per_cluster, unit)


def detect_feedback_pairs(
    graphs: Mapping[object, CausalGraph], include_unoriented: bool = False
) -> dict[object, list[Pair]]:
    """Per cluster, unordered pairs ``(a, b)`` with ``a < b`` linked both ways at any lags."""
    out = {}
    for c in sorted(graphs, key=_sort_key):
        directed = set(_pair_lags(graphs[c], include_unoriented))
        out[c] = sorted({(min(a, b), max(a, b)) for a, b in directed if (b, a) in directed})
    return out


def comparison_report(graphs: Mapping[object, CausalGraph], min_common: int = 2) -> str:
    table = pair_frequency(graphs)
    common, specific = common_and_specific(graphs, min_common)
    feedback = detect_feedback_pairs(graphs)
    lines = [table.report().rstrip("\n"), "", f"Common pairs (in >= {min_common} clusters):"]
    for pair in common:
        lines.append(f"  {lag_summary(graphs, pair).describe()}")
    lines.append("Cluster-specific pairs:")
    for c, pairs in specific.items():
        lines.append(f"  cluster {c}: " + ", ".join(f"({a}, {b})" for a, b in pairs))
    lines.append("Feedback pairs:")
    for c, pairs in feedback.items():
        if pairs:
            lines.append(f"  cluster {c}: " + ", ".join(f"({a}, {b})" for a, b in pairs))
    return "\n".join(lines) + "\n"
