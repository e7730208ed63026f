"""Command-line pipeline: segment, sample, discover, compare, bench.

Stages communicate only through files under the output directory::

    out/effective_config.json
    out/segment/{cycles.csv, labels.csv, sparse_report.json, summary.json}
    out/sample/{manifest_cluster<c>.csv, validation_cluster<c>.json}
    out/graphs/cluster_<c>/{<Test>.json, <Test>.dot, hybrid.json, hybrid.dot, standardization.json}
    out/graphs/skipped.json
    out/compare/{pair_frequency.csv, report.txt, feedback.json}
    out/bench/{report.csv, cells.json, table.txt}

Exit codes: 0 success (possibly with warnings), 2 configuration error,
3 data error, 4 internal error.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from ._seeding import key_seed
from .config import PipelineConfig, load_config
from .dataset import FOUNDRY_SCHEMA, drop_sparse_variables, load_csv, standardize
from .errors import ConfigError, DataError, DegenerateConditioningError
from .graph import CausalGraph, atomic_write
from .hybrid import hybrid
from .pcmci import PCMCIPlus
from .posthoc import comparison_report, detect_feedback_pairs, pair_frequency
from .sampling import RepresentativeSequence, concatenate, read_manifest, remove_outlier_cycles, sample_and_validate
from .segmentation import (
    attach_stats,
    apply_partition,
    baseline_cluster,
    cycle_index_text,
    ingest_cluster_labels,
    read_cycle_index,
    segment_cycles,
)
from . import synthetic

log = logging.getLogger("meltcause")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_raw(cfg: PipelineConfig):
    if not cfg.paths.input:
        raise ConfigError("paths.input is not set")
    ds = load_csv(cfg.paths.input, FOUNDRY_SCHEMA, cfg.data.sample_interval_s)
    return drop_sparse_variables(ds, cfg.data.max_missing_fraction)


def _write_effective(cfg: PipelineConfig) -> None:
    atomic_write(os.path.join(cfg.paths.output, "effective_config.json"), cfg.effective_json())


# -- stages --------------------------------------------------------------


def cmd_segment(cfg: PipelineConfig) -> int:
    ds, sparse = _load_raw(cfg)
    cycles = segment_cycles(ds, cfg.segmentation, cfg.roles.temperature)
    if not cycles:
        raise DataError("no melting cycles found; check the segmentation rules")
    cycles_stats = attach_stats(ds, cycles, {"energy": cfg.roles.energy, "weight": cfg.roles.weight})
    if cfg.paths.labels:
        partition = ingest_cluster_labels(cfg.paths.labels, cycles_stats)
    else:
        partition = baseline_cluster(
            cycles_stats, ds, cfg.clustering.k, cfg.clustering.profile_len, cfg.seed, cfg.roles.temperature
        )
    labelled = apply_partition(cycles_stats, partition)

    out = os.path.join(cfg.paths.output, "segment")
    atomic_write(os.path.join(out, "cycles.csv"), cycle_index_text(labelled))
    atomic_write(
        os.path.join(out, "labels.csv"),
        _csv_text(["cycle_id", "cluster"], sorted(partition.assignments.items())),
    )
    atomic_write(os.path.join(out, "sparse_report.json"), sparse.to_json())
    summary = {
        "cycles": len(labelled),
        "discarded": cycles.discarded,
        "discard_reasons": list(cycles.discard_reasons),
        "clusters": {str(k): len(partition.members(k)) for k in partition.labels},
    }
    atomic_write(os.path.join(out, "summary.json"), _dump(summary))
    _write_effective(cfg)
    log.info("segmented %d cycles (%d discarded) into %d clusters", len(labelled), cycles.discarded, partition.k)
    return EXIT_OK


def _read_cycles(cfg: PipelineConfig):
    path = os.path.join(cfg.paths.output, "segment", "cycles.csv")
    if not os.path.exists(path):
        raise DataError(f"{path} not found; run 'segment' first")
    cycles = read_cycle_index(path)
    if any(c.cluster is None for c in cycles):
        raise DataError("cycle index lacks cluster labels")
    return cycles


def _by_cluster(cycles):
    groups: dict[int, list] = {}
    for c in cycles:
        groups.setdefault(c.cluster, []).append(c)
    return dict(sorted(groups.items()))


def cmd_sample(cfg: PipelineConfig) -> int:
    cycles = _read_cycles(cfg)
    out = os.path.join(cfg.paths.output, "sample")
    for path in glob.glob(os.path.join(out, "manifest_cluster*.csv")) + glob.glob(os.path.join(out, "validation_cluster*.json")):
        os.unlink(path)
    for label, members in _by_cluster(cycles).items():
        scfg = replace(cfg.sampling, seed=key_seed(cfg.seed, "sample", label))
        if len(members) >= 4:
            kept, removed = remove_outlier_cycles(members, scfg)
        else:
            kept, removed = list(members), []
        if not kept:
            kept, removed = list(members), []
        selected, report = sample_and_validate(kept, None, scfg)
        d = report.to_dict()
        d["outliers_removed"] = [{"cycle_id": c.id, "feature": f} for c, f in removed]
        d["cluster_size"] = len(members)
        atomic_write(os.path.join(out, f"validation_cluster{label}.json"), _dump(d))
        atomic_write(
            os.path.join(out, f"manifest_cluster{label}.csv"),
            _csv_text(["cluster", "cycle_id"], [[label, c.id] for c in selected]),
        )
        if not report.passed:
            log.warning("cluster %s: subset failed validation after %d draws; using the best draw", label, report.retries_used)
    _write_effective(cfg)
    return EXIT_OK


def _discover_cluster(cfg: PipelineConfig, ds, label, selected, out_dir):
    seq = concatenate(selected, ds)
    data, report = standardize(seq.data)
    seq = RepresentativeSequence(data, seq.boundary_rows, seq.provenance)
    dcfg = replace(cfg.discovery, seed=key_seed(cfg.seed, "discover", label))
    files = {os.path.join(out_dir, "standardization.json"): report.to_json()}
    adjs = {}
    for name in cfg.tests:
        res = PCMCIPlus(seq, dcfg.with_test(name, **cfg.test_params.get(name, {}))).run()
        adjs[name] = res.adjacency
        g = res.graph
        g.meta = {"cluster": label, "ci_test": name, "samples": data.T}
        files[os.path.join(out_dir, f"{name}.json")] = g.to_json()
        files[os.path.join(out_dir, f"{name}.dot")] = g.to_dot()
    if len(cfg.tests) == 4:
        h = hybrid(*(adjs[n] for n in cfg.tests))
        g = h.matrix.to_graph(data.sample_interval_s)
        g.meta = {
            "cluster": label,
            "ci_test": "hybrid",
            "samples": data.T,
            "resolved_conflicts": [[list(p), lag, k if isinstance(k, str) else list(k)] for p, lag, k in h.resolved_conflicts],
            "tie_breaks": [[list(p), lag] for p, lag in h.tie_breaks],
        }
        files[os.path.join(out_dir, "hybrid.json")] = g.to_json()
        files[os.path.join(out_dir, "hybrid.dot")] = g.to_dot()
    return files


def cmd_discover(cfg: PipelineConfig) -> int:
    ds, _ = _load_raw(cfg)
    if cfg.data.variables:
        present = {v.index for v in ds.variables}
        missing = sorted(set(cfg.data.variables) - present)
        if missing:
            raise DataError(f"discovery variables {missing} are not in the (sparse-filtered) dataset")
        ds = ds.select(cfg.data.variables)
    cycles = {c.id: c for c in _read_cycles(cfg)}
    manifests = sorted(glob.glob(os.path.join(cfg.paths.output, "sample", "manifest_cluster*.csv")))
    if not manifests:
        raise DataError("no selection manifests found; run 'sample' first")
    jobs = []
    for path in manifests:
        entries = read_manifest(path)
        if not entries:
            continue
        label = entries[0][0]
        try:
            selected = [cycles[cid] for _, cid in entries]
        except KeyError as exc:
            raise DataError(f"{path} references unknown cycle {exc}") from None
        jobs.append((label, selected))
    jobs.sort(key=lambda j: j[0])

    root = os.path.join(cfg.paths.output, "graphs")

    def run(job):
        label, selected = job
        try:
            return label, _discover_cluster(cfg, ds, label, selected, os.path.join(root, f"cluster_{label}")), None
        except (DataError, DegenerateConditioningError) as exc:
            return label, None, f"{type(exc).__name__}: {exc}"

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    skipped = {}
    for label, files, reason in results:
        if reason is not None:
            skipped[str(label)] = reason
            log.warning("cluster %s skipped: %s", label, reason)
            continue
        for path, text in sorted(files.items()):
            atomic_write(path, text)
    atomic_write(os.path.join(root, "skipped.json"), _dump(skipped))
    _write_effective(cfg)
    return EXIT_OK


def _load_graphs(cfg: PipelineConfig) -> dict:
    root = os.path.join(cfg.paths.output, "graphs")
    graphs = {}
    for d in sorted(glob.glob(os.path.join(root, "cluster_*"))):
        path = os.path.join(d, f"{cfg.compare.graph}.json")
        if not os.path.exists(path):
            continue
        label = os.path.basename(d)[len("cluster_") :]
        key = int(label) if label.lstrip("-").isdigit() else label
        try:
            graphs[key] = CausalGraph.load(path)
        except (KeyError, ValueError) as exc:
            raise DataError(f"malformed graph file {path}: {exc}") from exc
    return graphs


def cmd_compare(cfg: PipelineConfig) -> int:
    graphs = _load_graphs(cfg)
    out = os.path.join(cfg.paths.output, "compare")
    table = pair_frequency(graphs, cfg.compare.include_unoriented)
    atomic_write(os.path.join(out, "pair_frequency.csv"), table.to_csv())
    report = comparison_report(graphs, cfg.compare.min_common) if graphs else table.report()
    atomic_write(os.path.join(out, "report.txt"), report)
    feedback = detect_feedback_pairs(graphs, cfg.compare.include_unoriented)
    atomic_write(os.path.join(out, "feedback.json"), _dump({str(k): [list(p) for p in v] for k, v in feedback.items()}))
    _write_effective(cfg)
    if not graphs:
        log.warning("no '%s' graphs found under %s", cfg.compare.graph, os.path.join(cfg.paths.output, "graphs"))
    return EXIT_OK


def _suite(cfg: PipelineConfig, suite: str | None):
    name = suite or cfg.bench.suite
    builders = {"linear": synthetic.linear_suite, "nonlinear": synthetic.nonlinear_suite, "noise": synthetic.noise_suite}
    if name in builders:
        return builders[name](cfg.bench.n_specs, cfg.bench.T, seed=cfg.seed)
    if not os.path.exists(name):
        raise DataError(f"suite file not found: {name}")
    try:
        return synthetic.load_suite(name)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed suite file {name}: {exc}") from exc


def cmd_bench(cfg: PipelineConfig, suite: str | None = None) -> int:
    specs = _suite(cfg, suite)
    report = synthetic.run_benchmark(specs, cfg.discovery, cfg.test_params)
    out = os.path.join(cfg.paths.output, "bench")
    atomic_write(os.path.join(out, "report.csv"), report.to_csv())
    atomic_write(os.path.join(out, "cells.json"), report.cells_json())
    atomic_write(os.path.join(out, "table.txt"), report.table() + "\n")
    _write_effective(cfg)
    print(report.table())
    return EXIT_OK


def cmd_pipeline(cfg: PipelineConfig) -> int:
    for stage in (cmd_segment, cmd_sample, cmd_discover, cmd_compare):
        stage(cfg)
    return EXIT_OK


# -- entry point ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML pipeline configuration")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--jobs", type=int, help="parallel workers for per-cluster work")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="meltcause", description="Causal discovery pipeline for furnace time series.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("segment", parents=[common], help="split the trace into melting cycles and attach clusters")
    sub.add_parser("sample", parents=[common], help="select and validate a subset of cycles per cluster")
    sub.add_parser("discover", parents=[common], help="run PCMCI+ with each CI test and integrate the results")
    sub.add_parser("compare", parents=[common], help="compare causal graphs across clusters")
    bench = sub.add_parser("bench", parents=[common], help="score the methods on synthetic ground truth")
    bench.add_argument("--suite", help="suite JSON file, or one of: linear, nonlinear, noise")
    sub.add_parser("pipeline", parents=[common], help="segment, sample, discover and compare")
    return parser


COMMANDS = {
    "segment": cmd_segment,
    "sample": cmd_sample,
    "discover": cmd_discover,
    "compare": cmd_compare,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.jobs, args.out)
        if args.command == "bench":
            return cmd_bench(cfg, args.suite)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DegenerateConditioningError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
