"""Lag-resolved adjacency structures, causal graphs and their JSON/DOT forms.

``LaggedAdjacency`` keys links by column *positions* ``(source, target, lag)``.
A lag-0 edge that is unoriented or conflicting is stored in both directions
with the same mark. ``CausalGraph`` is the exported view and refers to
variables by their 1-based ids.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from .dataset import VariableMeta

MARKS = ("directed", "unoriented", "conflict")


@dataclass(frozen=True)
class LinkInfo:
    strength: float
    p_value: float
    mark: str = "directed"
    statistic: float | None = None
    provenance: str | None = None

    def __post_init__(self):
        if self.mark not in MARKS:
            raise ValueError(f"unknown orientation mark {self.mark!r}")


Key = tuple[int, int, int]


class LaggedAdjacency:
    """Presence, strength and p-value per ``(source, target, lag)`` for lags ``0..tau_max``."""

    def __init__(self, variables: Iterable[VariableMeta], tau_max: int, entries: dict[Key, LinkInfo] | None = None):
        self.variables = tuple(variables)
        self.tau_max = int(tau_max)
        self.entries: dict[Key, LinkInfo] = {}
        for key, info in (entries or {}).items():
            self.add(*key, info)

    @property
    def N(self) -> int:
        return len(self.variables)

    def add(self, i: int, j: int, tau: int, info: LinkInfo) -> None:
        if not (0 <= i < self.N and 0 <= j < self.N):
            raise IndexError(f"link ({i}, {j}, {tau}) outside the variable set")
        if not 0 <= tau <= self.tau_max:
            raise ValueError(f"lag {tau} outside 0..{self.tau_max}")
        if tau == 0 and i == j:
            raise ValueError("self-links are not allowed at lag 0")
        if tau > 0 and info.mark != "directed":
            info = replace(info, mark="directed")
        self.entries[(i, j, tau)] = info

    def remove(self, i: int, j: int, tau: int) -> None:
        self.entries.pop((i, j, tau), None)

    def __contains__(self, key) -> bool:
        return tuple(key) in self.entries

    def __getitem__(self, key) -> LinkInfo:
        return self.entries[tuple(key)]

    def __iter__(self) -> Iterator[Key]:
        return iter(sorted(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LaggedAdjacency):
            return NotImplemented
        return self.same_universe(other) and self.entries == other.entries

    __hash__ = None

    def keys(self) -> set[Key]:
        return set(self.entries)

    def copy(self) -> "LaggedAdjacency":
        out = LaggedAdjacency(self.variables, self.tau_max)
        out.entries = dict(self.entries)  # already validated
        return out

    def same_universe(self, other: "LaggedAdjacency") -> bool:
        return self.tau_max == other.tau_max and [v.name for v in self.variables] == [
            v.name for v in other.variables
        ]

    def lag0_pairs(self) -> list[tuple[int, int]]:
        return sorted({(min(i, j), max(i, j)) for (i, j, tau) in self.entries if tau == 0})

    def directed_lag0_edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for (i, j, tau), info in self.entries.items() if tau == 0 and info.mark == "directed")

    def check_invariants(self) -> None:
        for (i, j, tau), info in self.entries.items():
            if tau == 0 and info.mark == "directed" and (j, i, 0) in self.entries:
                if self.entries[(j, i, 0)].mark == "directed":
                    raise AssertionError(f"lag-0 pair ({i}, {j}) directed both ways without a conflict mark")

    def to_graph(self, lag_unit_s: float = 10.0) -> "CausalGraph":
        links = []
        seen = set()
        for (i, j, tau) in sorted(self.entries):
            info = self.entries[(i, j, tau)]
            if tau == 0 and info.mark != "directed":
                pair = (min(i, j), max(i, j))
                if pair in seen:
                    continue
                seen.add(pair)
                i, j = pair
                other = self.entries.get((j, i, 0), info)
                if other.strength > info.strength:
                    info = replace(other, mark=info.mark)
            links.append(
                Link(
                    self.variables[i].index,
                    self.variables[j].index,
                    tau,
                    info.strength,
                    info.p_value,
                    info.mark,
                    info.statistic,
                    info.provenance,
                )
            )
        return CausalGraph(self.variables, links, lag_unit_s, self.tau_max)


def has_directed_cycle(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    adj: dict[int, list[int]] = {v: [] for v in range(n)}
    indeg = [0] * n
    for a, b in edges:
        adj[a].append(b)
        indeg[b] += 1
    stack = [v for v in range(n) if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for w in adj[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    return seen < n


@dataclass(frozen=True)
class Link:
    source: int
    target: int
    lag: int
    strength: float
    p_value: float
    mark: str = "directed"
    statistic: float | None = None
    provenance: str | None = None


@dataclass
class CausalGraph:
    variables: tuple[VariableMeta, ...]
    links: list[Link]
    lag_unit_s: float = 10.0
    tau_max: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.links = sorted(self.links, key=lambda l: (l.source, l.target, l.lag))

    @property
    def ids(self) -> list[int]:
        return [v.index for v in self.variables]

    def directed_pairs(self, include_unoriented: bool = False) -> set[tuple[int, int]]:
        """Variable-id pairs ``(a, b)`` with a link ``a -> b`` at any lag."""
        out = set()
        for l in self.links:
            if l.mark == "directed":
                out.add((l.source, l.target))
            elif l.mark == "conflict" or include_unoriented:
                out.add((l.source, l.target))
                out.add((l.target, l.source))
        return out

    def to_adjacency(self) -> LaggedAdjacency:
        pos = {v.index: p for p, v in enumerate(self.variables)}
        adj = LaggedAdjacency(self.variables, max([self.tau_max] + [l.lag for l in self.links]))
        for l in self.links:
            info = LinkInfo(l.strength, l.p_value, l.mark, l.statistic, l.provenance)
            i, j = pos[l.source], pos[l.target]
            adj.add(i, j, l.lag, info)
            if l.lag == 0 and l.mark != "directed":
                adj.add(j, i, 0, info)
        return adj

    def to_dict(self) -> dict:
        with_prov = any(l.provenance is not None for l in self.links)
        links = []
        for l in self.links:
            d = {
                "source": l.source,
                "target": l.target,
                "lag": l.lag,
                "strength": l.strength,
                "p_value": l.p_value,
                "orientation": l.mark,
            }
            if l.statistic is not None:
                d["statistic"] = l.statistic
            if with_prov:
                d["provenance"] = l.provenance
            links.append(d)
        out = {
            "variables": [{"index": v.index, "name": v.name, "unit": v.unit, "role": v.role} for v in self.variables],
            "tau_max": self.tau_max,
            "lag_unit_s": self.lag_unit_s,
            "links": links,
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        variables = tuple(VariableMeta(v["index"], v["name"], v.get("unit", ""), v.get("role", "process")) for v in d["variables"])
        links = [
            Link(
                int(l["source"]),
                int(l["target"]),
                int(l["lag"]),
                float(l["strength"]),
                float(l["p_value"]),
                l.get("orientation", "directed"),
                l.get("statistic"),
                l.get("provenance"),
            )
            for l in d["links"]
        ]
        return cls(variables, links, float(d.get("lag_unit_s", 10.0)), int(d.get("tau_max", 0)), d.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "CausalGraph":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CausalGraph":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_dot(self, buckets: int = 5) -> str:
        """Graphviz source: edge label = lag, width and colour bucketed by |strength|."""
        palette = ["#c6dbef", "#9ecae1", "#6baed6", "#3182bd", "#08519c", "#08306b"]
        top = max((abs(l.strength) for l in self.links), default=0.0)
        lines = ["digraph causal {", '  node [shape=circle, style=filled, fillcolor=black, fontcolor=white];']
        for v in self.variables:
            lines.append(f'  {v.index} [label="{v.index}", tooltip="{v.name}"];')
        for l in self.links:
            b = 0 if top == 0 else min(buckets - 1, int(buckets * abs(l.strength) / top))
            attrs = [
                f'label="{l.lag}"',
                f"penwidth={1 + b}",
                f'color="{palette[min(b, len(palette) - 1)]}"',
            ]
            if l.mark == "unoriented":
                attrs.append("dir=none")
            elif l.mark == "conflict":
                attrs += ["dir=both", "style=dashed"]
            lines.append(f"  {l.source} -> {l.target} [{', '.join(attrs)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
