"""Synthetic lagged structural causal models, graph scoring and benchmarks."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .ci import TEST_NAMES
from .dataset import TimeSeriesDataset, VariableMeta
from .errors import ConfigError, DataError, UnstableSpecError
from .graph import CausalGraph, has_directed_cycle
from .hybrid import integrate, resolve_bidirectional
from .pcmci import DiscoveryConfig, PCMCIPlus

BURN_IN = 200
FUNCTIONS = ("linear", "quadratic", "tanh")
NOISES = ("gaussian", "uniform", "heteroskedastic")


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    lag: int
    coefficient: float
    function: str = "linear"


@dataclass
class SCMSpec:
    """Lagged SCM: ``X_t^j = a_j X_{t-1}^j + sum f(c * X_{t-tau}^i) + noise``.

    Variables are positions ``0..n_vars-1``; the generated dataset names them
    ``X1..Xn`` with ids ``1..n``.
    """

    n_vars: int
    edges: list[Edge]
    noise: list[tuple[str, float]] | None = None
    autocorr: list[float] | None = None
    T: int = 2000
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        self.edges = [e if isinstance(e, Edge) else Edge(**e) if isinstance(e, dict) else Edge(*e) for e in self.edges]
        if self.noise is None:
            self.noise = [("gaussian", 1.0)] * self.n_vars
        self.noise = [tuple(n) for n in self.noise]
        if self.autocorr is None:
            self.autocorr = [0.0] * self.n_vars
        self.validate()

    def validate(self) -> None:
        if self.n_vars < 1:
            raise ConfigError("n_vars must be >= 1")
        if len(self.noise) != self.n_vars or len(self.autocorr) != self.n_vars:
            raise ConfigError("noise and autocorr need one entry per variable")
        for dist, scale in self.noise:
            if dist not in NOISES or not scale > 0:
                raise ConfigError(f"bad noise spec {(dist, scale)}")
        for a in self.autocorr:
            if not -1 < a < 1:
                raise ConfigError("autocorrelation coefficients must lie in (-1, 1)")
        for e in self.edges:
            if not (0 <= e.source < self.n_vars and 0 <= e.target < self.n_vars):
                raise ConfigError(f"edge {e} references an unknown variable")
            if e.lag < 0 or (e.lag == 0 and e.source == e.target):
                raise ConfigError(f"edge {e} has an invalid lag")
            if e.function not in FUNCTIONS:
                raise ConfigError(f"unknown edge function {e.function!r}")
        if has_directed_cycle(self.n_vars, [(e.source, e.target) for e in self.edges if e.lag == 0]):
            raise ConfigError("lag-0 edges must form an acyclic graph")
        rho = self.spectral_radius()
        if rho >= 0.98:
            raise UnstableSpecError(f"companion spectral radius {rho:.3f} >= 0.98")

    @property
    def max_lag(self) -> int:
        return max([1] + [e.lag for e in self.edges])

    def spectral_radius(self) -> float:
        """Spectral radius of the companion matrix of the linearised lagged part.

        Contemporaneous edges are folded in through ``(I - B0)^-1``; nonlinear
        edges contribute their coefficient as the local gain.
        """
        n, L = self.n_vars, self.max_lag
        B = np.zeros((L + 1, n, n))
        for j, a in enumerate(self.autocorr):
            B[1, j, j] += a
        for e in self.edges:
            B[e.lag, e.target, e.source] += e.coefficient
        inv = np.linalg.inv(np.eye(n) - B[0])
        comp = np.zeros((n * L, n * L))
        for lag in range(1, L + 1):
            comp[:n, (lag - 1) * n : lag * n] = inv @ B[lag]
        if L > 1:
            comp[n:, :-n] = np.eye(n * (L - 1))
        return float(np.max(np.abs(np.linalg.eigvals(comp))))

    def to_dict(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "edges": [asdict(e) for e in self.edges],
            "noise": [list(n) for n in self.noise],
            "autocorr": list(self.autocorr),
            "T": self.T,
            "seed": self.seed,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SCMSpec":
        return cls(
            n_vars=int(d["n_vars"]),
            edges=[Edge(**e) for e in d["edges"]],
            noise=[tuple(n) for n in d["noise"]] if d.get("noise") else None,
            autocorr=d.get("autocorr"),
            T=int(d.get("T", 2000)),
            seed=int(d.get("seed", 0)),
            name=d.get("name", ""),
        )


@dataclass(frozen=True)
class GroundTruthGraph:
    """True lagged edges as ``(source_id, target_id, lag)``; self-links come from autocorrelation."""

    variables: tuple[VariableMeta, ...]
    edges: frozenset
    tau_max: int

    def cross_edges(self) -> frozenset:
        return frozenset(e for e in self.edges if e[0] != e[1])


def _apply(fn: str, u: np.ndarray | float):
    if fn == "linear":
        return u
    if fn == "quadratic":
        return u * u
    return np.tanh(u)


def _topological(n: int, edges: Sequence[Edge]) -> list[int]:
    children = {v: [] for v in range(n)}
    indeg = [0] * n
    for e in edges:
        if e.lag == 0:
            children[e.source].append(e.target)
            indeg[e.target] += 1
    ready = sorted(v for v in range(n) if indeg[v] == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in sorted(children[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort()
    return order


def scm_variables(n: int) -> tuple[VariableMeta, ...]:
    return tuple(VariableMeta(i + 1, f"X{i + 1}") for i in range(n))


def generate(spec: SCMSpec) -> tuple[TimeSeriesDataset, GroundTruthGraph]:
    """Simulate ``spec`` deterministically from its seed; the first 200 samples are discarded."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, L = spec.n_vars, spec.max_lag
    total = spec.T + BURN_IN + L
    eps = np.empty((total, n))
    for j, (dist, scale) in enumerate(spec.noise):
        if dist == "uniform":
            eps[:, j] = rng.uniform(-np.sqrt(3), np.sqrt(3), total) * scale
        else:
            eps[:, j] = rng.standard_normal(total) * scale
    incoming = {j: [e for e in spec.edges if e.target == j] for j in range(n)}
    order = _topological(n, spec.edges)
    X = np.zeros((total, n))
    for t in range(L, total):
        for j in order:
            drive = spec.autocorr[j] * X[t - 1, j]
            parents = 0.0
            for e in incoming[j]:
                parents += _apply(e.function, e.coefficient * X[t - e.lag, e.source])
            noise = eps[t, j]
            if spec.noise[j][0] == "heteroskedastic":
                noise *= 1.0 + abs(parents)
            X[t, j] = drive + parents + noise
    X = X[L + BURN_IN :]
    if not np.all(np.isfinite(X)) or np.abs(X).max() > 1e6:
        raise UnstableSpecError("simulated series diverged")
    variables = scm_variables(n)
    ds = TimeSeriesDataset(X, np.ones_like(X, dtype=bool), variables, 1.0)
    truth = {(e.source + 1, e.target + 1, e.lag) for e in spec.edges}
    truth |= {(j + 1, j + 1, 1) for j in range(n) if spec.autocorr[j] != 0}
    return ds, GroundTruthGraph(variables, frozenset(truth), L)


@dataclass(frozen=True)
class Score:
    shd: int
    fdr: float
    tpr: float
    tp: int = 0
    fp: int = 0
    fn: int = 0


def score(estimated: CausalGraph, truth: GroundTruthGraph, include_self_links: bool = False) -> Score:
    """SHD / FDR / TPR over lag-resolved edges.

    Lagged links are compared as directed ``(source, target, lag)`` triples.
    Lag-0 links are matched as adjacencies; a matched lag-0 adjacency whose
    orientation differs from the truth (reversed, unoriented or conflict)
    adds one to the SHD. With an empty truth, TPR is 1.
    """
    if {v.index for v in estimated.variables} != {v.index for v in truth.variables}:
        raise DataError("estimated graph and truth use different variable sets")
    keep = (lambda e: True) if include_self_links else (lambda e: e[0] != e[1])
    true_lagged = {e for e in truth.edges if e[2] > 0 and keep(e)}
    true_lag0 = {(min(a, b), max(a, b)): (a, b) for a, b, lag in truth.edges if lag == 0}
    est_lagged = {(l.source, l.target, l.lag) for l in estimated.links if l.lag > 0 and keep((l.source, l.target))}
    est_lag0: dict[tuple[int, int], object] = {}
    for l in estimated.links:
        if l.lag != 0:
            continue
        pair = (min(l.source, l.target), max(l.source, l.target))
        est_lag0[pair] = (l.source, l.target) if l.mark == "directed" else l.mark

    tp = len(true_lagged & est_lagged)
    fp = len(est_lagged - true_lagged)
    fn = len(true_lagged - est_lagged)
    wrong_dir = 0
    for pair, direction in true_lag0.items():
        if pair in est_lag0:
            tp += 1
            if est_lag0[pair] != direction:
                wrong_dir += 1
        else:
            fn += 1
    fp += len(set(est_lag0) - set(true_lag0))
    n_true = len(true_lagged) + len(true_lag0)
    fdr = fp / (fp + tp) if fp + tp else 0.0
    tpr = tp / n_true if n_true else 1.0
    return Score(fp + fn + wrong_dir, fdr, tpr, tp, fp, fn)


# -- benchmark -----------------------------------------------------------

METHODS = TEST_NAMES + ("Hybrid",)


@dataclass
class CellResult:
    spec: str
    method: str
    shd: int
    fdr: float
    tpr: float
    n_links: int
    lag0_acyclic: bool
    seconds: float
    graph: dict | None = None


@dataclass
class BenchmarkReport:
    cells: list[CellResult] = field(default_factory=list)

    def means(self) -> dict[str, dict[str, float]]:
        out = {}
        for m in METHODS:
            rows = [c for c in self.cells if c.method == m]
            if rows:
                out[m] = {
                    "mean_shd": float(np.mean([c.shd for c in rows])),
                    "mean_fdr": float(np.mean([c.fdr for c in rows])),
                    "mean_tpr": float(np.mean([c.tpr for c in rows])),
                }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "mean_shd", "mean_fdr", "mean_tpr"])
        for m, row in self.means().items():
            w.writerow([m, repr(row["mean_shd"]), repr(row["mean_fdr"]), repr(row["mean_tpr"])])
        return buf.getvalue()

    def cells_json(self, include_timing: bool = False) -> str:
        rows = []
        for c in self.cells:
            d = asdict(c)
            if not include_timing:
                d.pop("seconds")
            rows.append(d)
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        lines = [f"{'method':<14}{'SHD':>8}{'FDR':>8}{'TPR':>8}"]
        for m, r in self.means().items():
            lines.append(f"{m:<14}{r['mean_shd']:>8.2f}{r['mean_fdr']:>8.3f}{r['mean_tpr']:>8.3f}")
        return "\n".join(lines)


def _lag0_acyclic(graph: CausalGraph) -> bool:
    pos = {v: p for p, v in enumerate(graph.ids)}
    edges = [(pos[l.source], pos[l.target]) for l in graph.links if l.lag == 0 and l.mark == "directed"]
    return not has_directed_cycle(len(pos), edges)


def run_benchmark(
    suite: Sequence[SCMSpec],
    cfg: DiscoveryConfig = DiscoveryConfig(),
    test_params: dict[str, dict] | None = None,
    methods: Sequence[str] = METHODS,
    keep_graphs: bool = False,
) -> BenchmarkReport:
    """Run the four single-test PCMCI+ variants and the hybrid on every spec."""
    if not suite:
        raise ConfigError("benchmark suite is empty")
    test_params = test_params or {}
    need = set(TEST_NAMES) if "Hybrid" in methods else set(methods) & set(TEST_NAMES)
    report = BenchmarkReport()
    for k, spec in enumerate(suite):
        ds, truth = generate(spec)
        label = spec.name or f"spec{k}"
        adjs = {}
        for name in TEST_NAMES:
            if name not in need:
                continue
            t0 = time.perf_counter()
            res = PCMCIPlus(ds, cfg.with_test(name, **test_params.get(name, {}))).run()
            adjs[name] = res.adjacency
            if name in methods:
                report.cells.append(_cell(label, name, res.graph, truth, time.perf_counter() - t0, keep_graphs))
        if "Hybrid" in methods:
            t0 = time.perf_counter()
            h = resolve_bidirectional(integrate(*(adjs[n] for n in TEST_NAMES)), adjs["CMIknn"])
            g = h.matrix.to_graph(ds.sample_interval_s)
            report.cells.append(_cell(label, "Hybrid", g, truth, time.perf_counter() - t0, keep_graphs))
    return report


def _cell(label, method, graph, truth, seconds, keep) -> CellResult:
    s = score(graph, truth)
    return CellResult(
        label, method, s.shd, s.fdr, s.tpr, len(graph.links), _lag0_acyclic(graph), seconds, graph.to_dict() if keep else None
    )


def load_suite(path) -> list[SCMSpec]:
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("specs", [])
    return [SCMSpec.from_dict(d) for d in data]


def save_suite(suite: Sequence[SCMSpec], path) -> None:
    with open(path, "w") as fh:
        json.dump([s.to_dict() for s in suite], fh, indent=2)


# -- canned suites -------------------------------------------------------


def linear_suite(n_specs: int = 20, T: int = 2000, seed: int = 0) -> list[SCMSpec]:
    """5 variables, three lagged cross links and one contemporaneous link, random coefficients."""
    rng = np.random.default_rng(seed)
    out = []
    for s in range(n_specs):
        while True:
            perm = rng.permutation(5)
            c = rng.uniform(0.4, 0.6, 4) * rng.choice([-1, 1], 4)
            edges = [
                Edge(int(perm[0]), int(perm[1]), 1, float(c[0])),
                Edge(int(perm[1]), int(perm[2]), 2, float(c[1])),
                Edge(int(perm[3]), int(perm[4]), 1, float(c[2])),
                Edge(int(perm[2]), int(perm[3]), 0, float(c[3])),
            ]
            auto = [float(a) for a in rng.uniform(0.3, 0.6, 5)]
            try:
                out.append(SCMSpec(5, edges, autocorr=auto, T=T, seed=int(rng.integers(2**31)), name=f"linear{s}"))
                break
            except UnstableSpecError:
                continue
    return out


def noise_suite(n_specs: int = 20, T: int = 2000, seed: int = 1) -> list[SCMSpec]:
    rng = np.random.default_rng(seed)
    return [
        SCMSpec(5, [], autocorr=[0.0] * 5, T=T, seed=int(rng.integers(2**31)), name=f"noise{s}")
        for s in range(n_specs)
    ]


def nonlinear_suite(n_specs: int = 10, T: int = 2000, seed: int = 2) -> list[SCMSpec]:
    """5 variables mixing linear, quadratic and tanh links, some heteroskedastic noise."""
    rng = np.random.default_rng(seed)
    out = []
    for s in range(n_specs):
        perm = rng.permutation(5)
        fns = ["quadratic", "tanh", "linear", "quadratic"]
        coef = [0.6, 1.2, 0.5, 0.6]
        sign = rng.choice([-1, 1], 4)
        edges = [
            Edge(int(perm[0]), int(perm[1]), 1, float(sign[0] * coef[0]), fns[0]),
            Edge(int(perm[1]), int(perm[2]), 1, float(sign[1] * coef[1]), fns[1]),
            Edge(int(perm[3]), int(perm[4]), 2, float(sign[2] * coef[2]), fns[2]),
            Edge(int(perm[2]), int(perm[3]), 0, float(sign[3] * coef[3]), fns[3]),
        ]
        noise = [("gaussian", 1.0)] * 5
        noise[int(perm[4])] = ("heteroskedastic", 0.7)
        auto = [float(a) for a in rng.uniform(0.2, 0.5, 5)]
        out.append(SCMSpec(5, edges, noise=noise, autocorr=auto, T=T, seed=int(rng.integers(2**31)), name=f"nonlinear{s}"))
    return out


def collider_spec(seed: int, T: int = 2000) -> SCMSpec:
    """``Z_t = X_t + Y_t + noise`` with independent AR(1) drivers ``X`` and ``Y``."""
    return SCMSpec(
        3,
        [Edge(0, 2, 0, 1.0), Edge(1, 2, 0, 1.0)],
        autocorr=[0.5, 0.5, 0.3],
        T=T,
        seed=seed,
        name=f"collider{seed}",
    )
