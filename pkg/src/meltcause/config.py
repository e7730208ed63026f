"""TOML pipeline configuration with validation and an auditable effective-config dump."""
from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .ci import TEST_NAMES, canonical_name
from .errors import ConfigError
from .pcmci import DiscoveryConfig
from .sampling import SamplerConfig
from .segmentation import SegmentationRules


@dataclass(frozen=True)
class Paths:
    input: str = ""
    labels: str | None = None
    output: str = "out"


@dataclass(frozen=True)
class DataOptions:
    sample_interval_s: float = 10.0
    max_missing_fraction: float = 0.99
    # variable ids used for discovery; empty means every retained variable
    variables: tuple[int, ...] = ()


@dataclass(frozen=True)
class RoleMap:
    temperature: int = 3
    energy: int = 8
    weight: int = 1


@dataclass(frozen=True)
class ClusteringOptions:
    """Baseline clustering, used only when no label file is configured."""

    k: int = 7
    profile_len: int = 64


@dataclass(frozen=True)
class CompareOptions:
    graph: str = "hybrid"
    min_common: int = 2
    include_unoriented: bool = False


@dataclass(frozen=True)
class BenchOptions:
    suite: str = "linear"
    n_specs: int = 10
    T: int = 2000


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = Paths()
    data: DataOptions = DataOptions()
    roles: RoleMap = RoleMap()
    segmentation: SegmentationRules = SegmentationRules()
    clustering: ClusteringOptions = ClusteringOptions()
    sampling: SamplerConfig = SamplerConfig()
    discovery: DiscoveryConfig = DiscoveryConfig()
    tests: tuple[str, ...] = TEST_NAMES
    test_params: dict = field(default_factory=dict)
    compare: CompareOptions = CompareOptions()
    bench: BenchOptions = BenchOptions()
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        # the global seed drives sampling and discovery; per-cluster streams derive from it
        object.__setattr__(self, "sampling", replace(self.sampling, seed=self.seed))
        object.__setattr__(self, "discovery", replace(self.discovery, seed=self.seed, n_jobs=1))

    def effective(self) -> dict:
        """Every setting after defaults were applied, JSON-ready."""
        d = asdict(self)
        d["sampling"]["features"] = list(self.sampling.features)
        d["data"]["variables"] = list(self.data.variables)
        d["tests"] = list(self.tests)
        return d

    def effective_json(self, omit_output: bool = True) -> str:
        d = self.effective()
        if omit_output:
            # the output location does not influence results
            d["paths"].pop("output")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def with_overrides(self, seed: int | None = None, jobs: int | None = None, out: str | None = None) -> "PipelineConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if jobs is not None:
            if jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            cfg = replace(cfg, jobs=int(jobs))
        if out is not None:
            cfg = replace(cfg, paths=replace(cfg.paths, output=out))
        return cfg


def _build(cls, table: dict, section: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {unknown}")
    kwargs = {}
    for k, v in table.items():
        if isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


SECTIONS = {
    "paths": Paths,
    "data": DataOptions,
    "roles": RoleMap,
    "segmentation": SegmentationRules,
    "clustering": ClusteringOptions,
    "sampling": SamplerConfig,
    "compare": CompareOptions,
    "bench": BenchOptions,
}


def parse_config(raw: dict, base_dir: str = ".") -> PipelineConfig:
    """Validate a parsed TOML document into a :class:`PipelineConfig`.

    Relative paths are resolved against ``base_dir`` (the config file's directory).
    """
    raw = dict(raw)
    for section in ("sampling", "discovery"):
        if isinstance(raw.get(section), dict) and "seed" in raw[section]:
            raise ConfigError(f"[{section}] seed is derived from the top-level 'seed'")
    allowed = set(SECTIONS) | {"discovery", "seed", "jobs"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    kwargs = {name: _build(cls, raw.get(name, {}), name) for name, cls in SECTIONS.items()}

    disc = dict(raw.get("discovery", {}))
    tests = disc.pop("tests", list(TEST_NAMES))
    params = disc.pop("params", {})
    try:
        tests = tuple(canonical_name(t) for t in tests)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not tests:
        raise ConfigError("[discovery] tests must not be empty")
    test_params = {}
    for name, p in params.items():
        try:
            test_params[canonical_name(name)] = dict(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if "ci_test" in disc:
        raise ConfigError("[discovery] takes 'tests', not 'ci_test'")
    kwargs["discovery"] = _build(DiscoveryConfig, disc, "discovery")
    # check every test accepts its parameters
    for name in tests:
        try:
            kwargs["discovery"].with_test(name, **test_params.get(name, {})).make_test()
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {name}: {exc}") from exc

    seed = raw.get("seed", 0)
    jobs = raw.get("jobs", 1)
    if not isinstance(seed, int) or not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("seed must be an integer and jobs a positive integer")

    p = kwargs["paths"]

    def resolve(v):
        return v if v is None or os.path.isabs(v) else os.path.normpath(os.path.join(base_dir, v))

    kwargs["paths"] = Paths(resolve(p.input) if p.input else "", resolve(p.labels), resolve(p.output))
    return PipelineConfig(tests=tests, test_params=test_params, seed=seed, jobs=jobs, **kwargs)


def load_config(path: str | os.PathLike | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))
