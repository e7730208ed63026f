"""PCMCI+ causal discovery on (possibly concatenated) multivariate time series.

Phases:

1. lagged condition selection (PC1 style) per target,
2. contemporaneous skeleton search that also re-tests lagged links with
   contemporaneous conditions,
3. orientation of lag-0 edges (colliders, chain propagation, cycle
   avoidance),
4. momentary conditional independence (MCI) tests on every surviving link.

Nodes are ``(variable position, lag)`` pairs relative to the target time
``t``; a lag of 0 means "same time step".
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import false_discovery_control

from ._seeding import key_seed
from .ci import CIQuery, CITest, CITestResult, MIN_SAMPLES, canonical_name, make_test
from .errors import ConfigError, DegenerateConditioningError, InsufficientSamplesError
from .graph import CausalGraph, LaggedAdjacency, LinkInfo, has_directed_cycle
from .sampling import RepresentativeSequence, single_sequence
from .dataset import TimeSeriesDataset

Node = tuple[int, int]


@dataclass(frozen=True)
class DiscoveryConfig:
    tau_max: int = 5
    pc_alpha: float = 0.05
    mci_alpha: float = 0.05
    ci_test: str = "RobustParCorr"
    ci_params: dict = field(default_factory=dict)
    max_conds_dim: int | None = 3
    max_combinations: int | None = 10
    seed: int = 0
    min_samples: int = MIN_SAMPLES
    fdr_method: str | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.tau_max < 1:
            raise ConfigError("tau_max must be >= 1")
        for name in ("pc_alpha", "mci_alpha"):
            a = getattr(self, name)
            if not 0 < a < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.max_conds_dim is not None and self.max_conds_dim < 0:
            raise ConfigError("max_conds_dim must be >= 0")
        if self.fdr_method not in (None, "none", "fdr_bh"):
            raise ConfigError("fdr_method must be None or 'fdr_bh'")
        try:
            object.__setattr__(self, "ci_test", canonical_name(self.ci_test))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def make_test(self) -> CITest:
        return make_test(self.ci_test, **self.ci_params)

    def with_test(self, name: str, **params) -> "DiscoveryConfig":
        return replace(self, ci_test=name, ci_params=params)


@dataclass
class ParentsMap:
    """Per target position: ``[(source, lag, strength), ...]`` ordered by decreasing strength."""

    parents: dict[int, list[tuple[int, int, float]]]

    def nodes(self, j: int) -> list[Node]:
        return [(i, tau) for i, tau, _ in self.parents.get(j, [])]

    def __getitem__(self, j: int):
        return self.parents[j]


def boundary_mask(seq: RepresentativeSequence, tau_max: int) -> np.ndarray:
    """Row validity per lag window: ``valid[tau, t]`` is True iff ``t >= tau`` and ``(t - tau, t]`` holds no junction."""
    T = seq.data.T
    seg = np.zeros(T, dtype=np.int64)
    for b in seq.boundary_rows:
        seg[b:] += 1
    valid = np.zeros((tau_max + 1, T), dtype=bool)
    for tau in range(tau_max + 1):
        valid[tau, tau:] = seg[tau:] == seg[: T - tau]
    return valid


class _LaggedData:
    """Builds aligned sample vectors for lagged CI queries, honouring masks and junctions."""

    def __init__(self, seq: RepresentativeSequence, max_lag: int, log: list | None = None):
        self.values = seq.data.values
        self.mask = seq.data.mask
        self.T = seq.data.T
        self.boundaries = np.asarray(seq.boundary_rows, dtype=np.int64)
        self.valid = boundary_mask(seq, max_lag)
        self.log = log

    def arrays(self, x: Node, y: Node, z: Sequence[Node]):
        nodes = [x, y, *z]
        lag = max(tau for _, tau in nodes)
        if lag >= self.valid.shape[0]:
            raise InsufficientSamplesError(f"lag {lag} exceeds the prepared window")
        rows = self.valid[lag].copy()
        for var, tau in nodes:
            rows[tau:] &= self.mask[: self.T - tau, var]
        t = np.nonzero(rows)[0]
        if self.log is not None:
            self.log.append((lag, t))
        cols = [self.values[t - tau, var] for var, tau in nodes]
        zmat = np.column_stack(cols[2:]) if z else np.empty((len(t), 0))
        return cols[0], cols[1], zmat


def _sort_nodes(nodes, names) -> list[Node]:
    return sorted(set(nodes), key=lambda n: (names[n[0]], n[1]))


@dataclass
class PCMCIResult:
    graph: CausalGraph
    adjacency: LaggedAdjacency
    parents: ParentsMap
    skeleton: LaggedAdjacency
    sepsets: dict
    n_tests: int


class PCMCIPlus:
    """Stateful runner; keeps a cache of CI results and the separating sets."""

    def __init__(self, seq: RepresentativeSequence | TimeSeriesDataset, cfg: DiscoveryConfig, query_log: list | None = None):
        if isinstance(seq, TimeSeriesDataset):
            seq = single_sequence(seq)
        self.seq = seq
        self.cfg = cfg
        self.N = seq.data.N
        self.names = seq.data.names
        self.test = cfg.make_test()
        # shifted parents can reach twice tau_max
        self.data = _LaggedData(seq, 2 * cfg.tau_max, query_log)
        self.cache: dict = {}
        self.sepsets: dict = {}
        self.n_tests = 0

    # -- CI plumbing -----------------------------------------------------

    def _key(self, x: Node, y: Node, z: Sequence[Node]):
        z = tuple(_sort_nodes(z, self.names))
        if x[1] == 0 and y[1] == 0 and self.names[x[0]] > self.names[y[0]]:
            x, y = y, x
        return x, y, z

    def ci(self, x: Node, y: Node, z: Sequence[Node]) -> CITestResult:
        x, y, z = self._key(x, y, z)
        hit = self.cache.get((x, y, z))
        if hit is not None:
            return hit
        xs, ys, zs = self.data.arrays(x, y, z)
        seed = key_seed(
            self.cfg.seed,
            self.names[x[0]],
            x[1],
            self.names[y[0]],
            y[1],
            tuple((self.names[v], tau) for v, tau in z),
        )
        try:
            res = self.test.test(CIQuery(xs, ys, zs, seed=seed, min_samples=self.cfg.min_samples))
        except DegenerateConditioningError:
            # drop the least independent conditions until the test's own design is full rank
            order = _pivot_order(zs)
            for r in range(len(order) - 1, -1, -1):
                keep = sorted(order[:r])
                try:
                    res = self.test.test(CIQuery(xs, ys, zs[:, keep], seed=seed, min_samples=self.cfg.min_samples))
                    break
                except DegenerateConditioningError:
                    continue
            dropped = [z[c] for c in range(len(z)) if c not in set(keep)]
            res = replace(res, extra={**res.extra, "dropped_conditions": dropped})
        self.cache[(x, y, z)] = res
        self.n_tests += 1
        return res

    def _run_many(self, queries: list[tuple[Node, Node, tuple[Node, ...]]]) -> list[CITestResult]:
        if self.cfg.n_jobs > 1 and len(queries) > 1:
            with ThreadPoolExecutor(self.cfg.n_jobs) as pool:
                return list(pool.map(lambda q: self.ci(*q), queries))
        return [self.ci(*q) for q in queries]

    # -- phase 1 ---------------------------------------------------------

    def pc_condition_selection(self) -> ParentsMap:
        cfg = self.cfg
        out = {}
        for j in range(self.N):
            cands: list[Node] = [(i, tau) for i in range(self.N) for tau in range(1, cfg.tau_max + 1)]
            strength = {c: np.inf for c in cands}
            p = 0
            while cands and (cfg.max_conds_dim is None or p <= cfg.max_conds_dim) and len(cands) - 1 >= p:
                queries = []
                for c in cands:
                    others = [o for o in cands if o != c][:p]
                    queries.append(((c[0], c[1]), (j, 0), tuple(others)))
                results = self._run_many(queries)
                kept = []
                for (c, _, conds), res in zip(queries, results):
                    if res.p_value > cfg.pc_alpha:
                        self.sepsets[(c, j)] = set(conds)
                    else:
                        strength[c] = abs(res.statistic)
                        kept.append(c)
                cands = sorted(kept, key=lambda c: (-strength[c], c[0], c[1]))
                p += 1
            out[j] = [(i, tau, float(strength[(i, tau)])) for i, tau in cands]
        return ParentsMap(out)

    # -- phase 2 ---------------------------------------------------------

    def _lagged_conds(self, adj: dict[int, set[Node]], link: Node, j: int) -> set[Node]:
        i, tau = link
        conds = {n for n in adj[j] if n[1] > 0 and n != link}
        conds |= {(k, lag + tau) for (k, lag) in adj[i] if lag > 0}
        return conds

    def build_contemporaneous_skeleton(self, parents: ParentsMap) -> LaggedAdjacency:
        """PC-stable search over lag-0 pairs (and lagged links) with contemporaneous conditions.

        Separating sets of removed links are stored in ``self.sepsets`` keyed
        by ``((source, lag), target)``; lag-0 removals are stored both ways.
        """
        cfg = self.cfg
        adj: dict[int, set[Node]] = {
            j: set(parents.nodes(j)) | {(i, 0) for i in range(self.N) if i != j} for j in range(self.N)
        }
        info: dict[tuple[Node, int], CITestResult] = {}
        p = 0
        while cfg.max_conds_dim is None or p <= cfg.max_conds_dim:
            snapshot = {j: set(a) for j, a in adj.items()}
            queries, owners = [], []
            any_tested = False
            for j in range(self.N):
                contemp = sorted((n for n in snapshot[j] if n[1] == 0), key=lambda n: n[0])
                for link in sorted(snapshot[j], key=lambda n: (n[1], n[0])):
                    if link[1] == 0 and link[0] > j:
                        continue  # each lag-0 pair once, from its larger endpoint
                    pool = [n for n in contemp if n != link]
                    if link[1] == 0:
                        other = snapshot[link[0]]
                        pool = sorted(set(pool) | {n for n in other if n[1] == 0 and n[0] != j}, key=lambda n: n[0])
                    if len(pool) < p:
                        continue
                    any_tested = True
                    base = self._lagged_conds(snapshot, link, j)
                    if link[1] == 0:
                        base |= self._lagged_conds(snapshot, (j, 0), link[0])
                    combos = itertools.islice(itertools.combinations(pool, p), cfg.max_combinations)
                    for S in combos:
                        queries.append((link, (j, 0), tuple(base | set(S))))
                        owners.append((link, j, frozenset(S)))
            if not any_tested:
                break
            results = self._run_many(queries)
            removed: set[tuple[Node, int]] = set()
            for (link, j, S), res in zip(owners, results):
                key = (link, j)
                if key in removed:
                    continue
                if res.p_value > cfg.pc_alpha:
                    removed.add(key)
                    self.sepsets[key] = set(S)
                    if link[1] == 0:
                        self.sepsets[((j, 0), link[0])] = set(S)
                else:
                    prev = info.get(key)
                    if prev is None or res.p_value > prev.p_value:
                        info[key] = res
            for link, j in removed:
                adj[j].discard(link)
                if link[1] == 0:
                    adj[link[0]].discard((j, 0))
            p += 1

        skel = LaggedAdjacency(self.seq.data.variables, cfg.tau_max)
        for j in range(self.N):
            for (i, tau) in adj[j]:
                if tau == 0 and i > j:
                    continue
                res = info.get(((i, tau), j))
                strength = abs(res.statistic) if res else 0.0
                pval = res.p_value if res else 0.0
                stat = res.statistic if res else None
                if tau == 0:
                    skel.add(i, j, 0, LinkInfo(strength, pval, "unoriented", stat))
                    skel.add(j, i, 0, LinkInfo(strength, pval, "unoriented", stat))
                else:
                    skel.add(i, j, tau, LinkInfo(strength, pval, "directed", stat))
        self.adj = adj
        return skel

    # -- phase 3 ---------------------------------------------------------

    def orient_contemporaneous(self, skeleton: LaggedAdjacency) -> LaggedAdjacency:
        return orient_contemporaneous(skeleton, self.sepsets)

    # -- phase 4 ---------------------------------------------------------

    def mci_tests(self, parents: ParentsMap, skeleton: LaggedAdjacency) -> LaggedAdjacency:
        cfg = self.cfg
        lagged = {j: {(i, tau) for (i, jj, tau) in skeleton.keys() if jj == j and tau > 0} for j in range(self.N)}
        cparents = {
            j: {i for (i, jj, tau) in skeleton.keys() if jj == j and tau == 0 and skeleton[(i, j, 0)].mark == "directed"}
            for j in range(self.N)
        }
        queries, links = [], []
        for (i, j, tau) in sorted(skeleton.keys()):
            info = skeleton[(i, j, tau)]
            if tau == 0 and info.mark != "directed" and i > j:
                continue
            if tau > 0:
                conds = {n for n in lagged[j] if n != (i, tau)}
                conds |= {(k, lag + tau) for (k, lag) in lagged[i]}
                conds |= {(k, 0) for k in cparents[j] if k != i}
            else:
                conds = set(lagged[j]) | set(lagged[i])
                conds |= {(k, 0) for k in cparents[j] if k != i}
                if info.mark != "directed":
                    conds |= {(k, 0) for k in cparents[i] if k != j}
            queries.append(((i, tau), (j, 0), tuple(conds)))
            links.append((i, j, tau))
        results = self._run_many(queries)
        pvals = np.array([r.p_value for r in results])
        if cfg.fdr_method == "fdr_bh" and len(pvals):
            # the family is every candidate link; those removed earlier count as p = 1
            m = self.N * self.N * cfg.tau_max + self.N * (self.N - 1) // 2
            padded = np.concatenate([pvals, np.ones(max(0, m - len(pvals)))])
            pvals = false_discovery_control(padded, method="bh")[: len(pvals)]
        out = LaggedAdjacency(skeleton.variables, cfg.tau_max)
        for (i, j, tau), res, pv in zip(links, results, pvals):
            if pv > cfg.mci_alpha:
                continue
            mark = skeleton[(i, j, tau)].mark
            li = LinkInfo(abs(res.statistic), float(pv), mark, float(res.statistic))
            out.add(i, j, tau, li)
            if tau == 0 and mark != "directed":
                out.add(j, i, 0, li)
        return out

    def run(self) -> PCMCIResult:
        parents = self.pc_condition_selection()
        skeleton = self.build_contemporaneous_skeleton(parents)
        oriented = self.orient_contemporaneous(skeleton)
        final = self.mci_tests(parents, oriented)
        graph = final.to_graph(self.seq.data.sample_interval_s)
        graph.meta = {"ci_test": self.cfg.ci_test, "n_tests": self.n_tests}
        return PCMCIResult(graph, final, parents, oriented, self.sepsets, self.n_tests)


def _pivot_order(z: np.ndarray) -> list[int]:
    """Column indices of ``z`` ordered by pivoted QR, most independent first."""
    from scipy.linalg import qr

    zc = z - z.mean(axis=0)
    scale = np.linalg.norm(zc, axis=0)
    scale[scale == 0] = 1.0
    _, _, piv = qr(zc / scale, mode="economic", pivoting=True)
    return [int(c) for c in piv]


def _reaches(directed: dict[int, set[int]], src: int, dst: int) -> bool:
    stack, seen = [src], {src}
    while stack:
        v = stack.pop()
        if v == dst:
            return True
        for w in directed.get(v, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def orient_contemporaneous(skeleton: LaggedAdjacency, sepsets: dict) -> LaggedAdjacency:
    """Orient lag-0 edges of ``skeleton`` using the separating sets from the skeleton search.

    Rule 1 (colliders): for an unshielded triple ``a - k - j`` where ``a`` is a
    lag-0 neighbour or a lagged parent of ``k`` and ``k`` is not in the
    separating set of ``(a, j)``, orient ``j -> k`` (and ``a -> k`` at lag 0).
    Rule 2 (chains): ``a -> k``, ``k - j``, ``a`` not adjacent to ``j`` gives
    ``k -> j``. Rule 3 (cycles): an unoriented ``i - j`` with a directed path
    ``i -> k -> j`` becomes ``i -> j``; any orientation that would close a
    directed lag-0 cycle is flipped, or marked ``conflict`` if both
    directions would. Edges receiving opposite orientations are marked
    ``conflict``.
    """
    N = skeleton.N
    adjacent = {j: {(i, tau) for (i, jj, tau) in skeleton.keys() if jj == j} for j in range(N)}
    state: dict[tuple[int, int], object] = {pair: "u" for pair in skeleton.lag0_pairs()}
    directed: dict[int, set[int]] = {v: set() for v in range(N)}

    def status(a: int, b: int):
        return state[(min(a, b), max(a, b))]

    def mark_conflict(pair):
        s = state[pair]
        if isinstance(s, tuple):
            directed[s[0]].discard(s[1])
        state[pair] = "conflict"

    def orient(a: int, b: int) -> None:
        pair = (min(a, b), max(a, b))
        s = state[pair]
        if s == "conflict" or s == (a, b):
            return
        if isinstance(s, tuple):
            mark_conflict(pair)
            return
        if _reaches(directed, b, a):
            if _reaches(directed, a, b):
                mark_conflict(pair)
                return
            a, b = b, a
        state[pair] = (a, b)
        directed[a].add(b)

    def sep(a: Node, j: int) -> set:
        s = sepsets.get((a, j))
        if s is None and a[1] == 0:
            s = sepsets.get(((j, 0), a[0]))
        return s if s is not None else set()

    # rule 1, proposals collected first so the result does not depend on order
    proposals: dict[tuple[int, int], set[tuple[int, int]]] = {}
    for k in range(N):
        contemp = sorted(i for (i, tau) in adjacent[k] if tau == 0)
        for j in contemp:
            for a in sorted(adjacent[k]):
                if a == (j, 0) or a[0] == j and a[1] == 0:
                    continue
                if a in adjacent[j] or (a[1] == 0 and a[0] == j):
                    continue
                if (k, 0) in sep(a, j):
                    continue
                proposals.setdefault((min(j, k), max(j, k)), set()).add((j, k))
                if a[1] == 0:
                    proposals.setdefault((min(a[0], k), max(a[0], k)), set()).add((a[0], k))
    for pair in sorted(proposals):
        dirs = proposals[pair]
        if len(dirs) > 1:
            mark_conflict(pair)
        else:
            orient(*next(iter(dirs)))

    changed = True
    while changed:
        changed = False
        for pair in sorted(state):
            if state[pair] != "u":
                continue
            x, y = pair
            for k, j in ((x, y), (y, x)):
                # rule 2: a -> k - j with a, j non-adjacent
                into_k = {(i, tau) for (i, tau) in adjacent[k] if tau > 0}
                into_k |= {(i, 0) for i in range(N) if i != k and (min(i, k), max(i, k)) in state and status(i, k) == (i, k)}
                if any(a not in adjacent[j] and a != (j, 0) for a in into_k):
                    orient(k, j)
                    changed = True
                    break
                # rule 3: k -> m -> j with k - j
                if any(status(k, m) == (k, m) and (min(m, j), max(m, j)) in state and status(m, j) == (m, j) for m in range(N) if m not in (k, j) and (min(k, m), max(k, m)) in state):
                    orient(k, j)
                    changed = True
                    break

    out = LaggedAdjacency(skeleton.variables, skeleton.tau_max)
    for (i, j, tau) in skeleton:
        info = skeleton[(i, j, tau)]
        if tau > 0:
            out.add(i, j, tau, info)
            continue
        s = status(i, j)
        if s == "u":
            out.add(i, j, 0, replace(info, mark="unoriented"))
        elif s == "conflict":
            out.add(i, j, 0, replace(info, mark="conflict"))
        elif s == (i, j):
            out.add(i, j, 0, replace(info, mark="directed"))
    assert not has_directed_cycle(N, out.directed_lag0_edges())
    return out


def pc_condition_selection(seq, cfg: DiscoveryConfig) -> ParentsMap:
    return PCMCIPlus(seq, cfg).pc_condition_selection()


def run_pcmci_plus(
    seq: RepresentativeSequence | TimeSeriesDataset, cfg: DiscoveryConfig, query_log: list | None = None
) -> tuple[CausalGraph, LaggedAdjacency]:
    """Run all phases and return the lag-annotated graph and its raw adjacency."""
    res = PCMCIPlus(seq, cfg, query_log).run()
    return res.graph, res.adjacency
