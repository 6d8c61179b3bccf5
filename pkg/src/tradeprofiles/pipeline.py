"""End-to-end run: encode, similarity tree, validated network, communities,
threshold sweep, combined partition, heatmaps and a manifest."""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import compare, community, encoder, hclust, heatmap, profiles, svn
from .config import RunConfig
from .ingest import Ingested, ingest, write_states_csv
from .partition import Partition, write_partition_csv

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class OutputSet:
    """Tracks files written by a run; writes go through temp-then-rename."""

    root: Path
    written: list[Path] = field(default_factory=list)

    def write(self, name: str, writer: Callable[[Path], None]) -> Path:
        final = self.root / name
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(final.name + ".tmp")
        try:
            writer(tmp)
            os.replace(tmp, final)
        finally:
            if tmp.exists():
                tmp.unlink()
        self.written.append(final)
        return final

    def write_text(self, name: str, text: str) -> Path:
        return self.write(name, lambda p: p.write_text(text, encoding="utf-8"))

    def remove_all(self) -> None:
        for p in self.written:
            with contextlib.suppress(FileNotFoundError):
                p.unlink()
        self.written.clear()

    def digests(self) -> dict[str, str]:
        return {p.relative_to(self.root).as_posix(): sha256_file(p) for p in sorted(self.written)}


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def read_truth_csv(path: str | Path) -> Partition:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return Partition.from_labels([r[0] for r in rows], [r[1] for r in rows])


def extend_with_singletons(p: Partition, elements: Sequence[str]) -> Partition:
    """Partition of ``elements``: labels from ``p`` where present, singletons elsewhere."""
    labels = [p.labels[e] if e in p.labels else ("solo", e) for e in elements]
    return Partition.from_labels(elements, labels)


def recovery_metrics(truth: Partition, svn_partition: Partition | None, combined: Partition | None) -> dict:
    members = list(truth.labels)
    out: dict = {"n_planted": len(members)}
    if svn_partition is not None:
        ext = extend_with_singletons(svn_partition, members)
        out["svn_ari"] = compare.adjusted_rand_index(ext, truth)
        out["svn_coverage"] = sum(m in svn_partition.labels for m in members) / len(members)
    if combined is not None:
        ext = extend_with_singletons(combined, members)
        sizes = ext.sizes()
        out["combined_ari"] = compare.adjusted_rand_index(ext, truth)
        out["combined_coverage"] = sum(sizes[ext.labels[m]] >= 2 for m in members) / len(members)
    return out


def non_singleton(p: Partition) -> Partition:
    sizes = p.sizes()
    keep = [e for e in p.labels if sizes[p.labels[e]] >= 2]
    return compare.restrict_partition(p, keep)


def sweep_subset(network_partition: Partition, tree: hclust.Dendrogram) -> list[str]:
    leaves = set(tree.labels)
    return [v for v in network_partition.labels if v in leaves]


def run_stock(cfg: RunConfig, data: Ingested, stock: str, out: OutputSet, prefix: str) -> dict:
    summary: dict = {"stock": stock}
    t_days = data.t_days

    with stage("encode"):
        series_all = encoder.build_state_series(data.records, stock, cfg.theta)
        out.write(f"{prefix}states.csv", lambda p: write_states_csv(series_all, p, t_days))
        filtered = encoder.filter_active(series_all, cfg.min_transactions)
        summary["n_investors"] = len(series_all)
        summary["n_filtered"] = len(filtered)

    trees: dict[str, hclust.Dendrogram] = {}
    if len(filtered) >= 2:
        with stage("dissim"):
            vectors = [profiles.build_profile_vector(s, t_days) for s in filtered]
            matrix = profiles.dissimilarity_matrix(vectors, workers=cfg.workers)
            if cfg.write_matrix:
                out.write(f"{prefix}dissim.bin", lambda p: profiles.write_binary(matrix, p))
        with stage("hclust"):
            for method in dict.fromkeys((cfg.linkage, *cfg.sweep_linkages)):
                tree = hclust.linkage(matrix, method)
                trees[method] = tree
                text = hclust.export_dendrogram(tree) + "\n"
                out.write_text(f"{prefix}dendrogram_{method}.nwk", text)
            del matrix

    net = None
    svn_series = series_all if cfg.svn_population == "unfiltered" else filtered
    if len(svn_series) >= 2:
        with stage("svn"):
            window = (0, t_days - 1) if cfg.activity_period == "full" else None
            net = svn.build_svn(
                svn_series,
                cfg.correction,
                cfg.alpha,
                convention=cfg.bonferroni_denominator_convention,
                window=window,
            )
            cats = data.categories()
            out.write(f"{prefix}svn_edges.csv", lambda p: svn.write_edges_csv(net, p))
            out.write(f"{prefix}svn_nodes.csv", lambda p: svn.write_nodes_csv(net, p, cats))
            out.write(f"{prefix}svn_audit.csv", lambda p: svn.write_audit_csv(net, p))
            comps = svn.connected_components(net)
            summary["svn"] = {
                "correction": net.correction,
                "threshold": net.threshold,
                "n_tests": net.n_tests,
                "n_nodes": len(net.nodes),
                "n_edges": len(net.edges),
                "component_sizes": [len(c) for c in comps],
            }

    modules = None
    if net is not None and net.nodes:
        with stage("communities"):
            graph = community.WeightedGraph.from_network(net)
            modules = community.infomap_partition(graph, cfg.infomap_seed, cfg.infomap_trials)
            out.write(f"{prefix}communities.csv", lambda p: write_partition_csv(modules, p, ("node_id", "module_id")))
            summary["communities"] = {
                "n_modules": modules.n_clusters,
                "codelength": community.codelength(graph, modules),
                "seed": cfg.infomap_seed,
                "trials": cfg.infomap_trials,
            }

    combined = None
    sweeps: dict[str, compare.SweepResult] = {}
    if modules is not None and trees:
        with stage("sweep"):
            subset = sweep_subset(modules, trees[cfg.linkage])
            summary["sweep_subset_size"] = len(subset)
            if len(subset) >= 2:
                reference = compare.restrict_partition(modules, subset)
                for method, tree in trees.items():
                    res = compare.ari_sweep(tree, reference, subset, cfg.coarse_step, cfg.fine_step, method)
                    sweeps[method] = res
                    out.write(f"{prefix}sweep_{method}.csv", lambda p, r=res: compare.write_sweep_csv(r, p))
                summary["sweeps"] = {m: {"best_threshold": r.best_threshold, "best_ari": r.best_ari} for m, r in sweeps.items()}
        if cfg.linkage in sweeps:
            with stage("combine"):
                best = sweeps[cfg.linkage].best_threshold
                combined = hclust.cut(trees[cfg.linkage], best)
                out.write(f"{prefix}combined_partition.csv", lambda p: write_partition_csv(combined, p))
                multi = non_singleton(combined)
                summary["combined"] = {
                    "linkage": cfg.linkage,
                    "threshold": best,
                    "n_investors_in_clusters": len(multi),
                    "n_clusters_size_ge_2": multi.n_clusters,
                }

    with stage("report"):
        dists = {}
        if modules is not None:
            dists["network"] = modules
        for method, res in sweeps.items():
            dists[method] = hclust.cut(trees[method], res.best_threshold)
        if dists:
            out.write(f"{prefix}size_distribution.csv", lambda p: compare.write_size_distribution_csv(dists, p))
        grids = {}
        by_id = {s.investor_id: s for s in series_all}
        if modules is not None:
            members = [by_id[v] for v in modules.labels]
            grids["svn"] = heatmap.heatmap_grid(modules, members, t_days)
        if combined is not None:
            multi = non_singleton(combined)
            if len(multi):
                grids["combined"] = heatmap.heatmap_grid(multi, [by_id[v] for v in multi.labels], t_days)
        for name, grid in grids.items():
            out.write(f"{prefix}heatmap_{name}.csv", lambda p, g=grid: heatmap.write_grid_csv(g, p))
            out.write(f"{prefix}heatmap_{name}.ppm", lambda p, g=grid: heatmap.write_ppm(g, p))
        if cfg.figures:
            from . import plotting

            if sweeps:
                out.write(f"{prefix}fig_sweep.png", lambda p: plotting.plot_sweeps(sweeps, p))
            if dists:
                out.write(f"{prefix}fig_cluster_sizes.png", lambda p: plotting.plot_size_distributions(dists, p))
            for name, grid in grids.items():
                out.write(f"{prefix}fig_heatmap_{name}.png", lambda p, g=grid, n=name: plotting.plot_heatmap(g, p, n))
            if "svn" in grids and "combined" in grids:
                out.write(f"{prefix}fig_overlap.png", lambda p: plotting.plot_overlap(grids["svn"], grids["combined"], p))

    if cfg.truth:
        with stage("recovery"):
            summary["recovery"] = recovery_metrics(read_truth_csv(cfg.truth), modules, combined)
    return summary


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every stock of ``cfg.input`` and write ``manifest.json``.

    On failure every file written by this call is removed and a
    :class:`PipelineError` naming the stage is raised.
    """
    if not cfg.input:
        raise PipelineError("ingest", ValueError("no input file configured"))
    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    out = OutputSet(root)
    try:
        with stage("ingest"):
            data = ingest(cfg.input)
            stocks = list(cfg.stocks) or data.stocks
            unknown = sorted(set(stocks) - set(data.stocks))
            if unknown:
                raise ValueError(f"stocks not in input: {unknown}")
        results = []
        for stock in stocks:
            log.info("processing stock %s", stock)
            results.append(run_stock(cfg, data, stock, out, f"{stock}/"))
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "config": cfg.as_dict(),
            "input": {
                "path": str(cfg.input),
                "sha256": sha256_file(cfg.input),
                "n_rows": data.n_rows,
                "n_records": len(data.records),
                "t_days": data.t_days,
                "first_date": data.dates[0],
                "last_date": data.dates[-1],
                "dropped_zero_volume": data.n_dropped_zero,
                "warnings": data.warnings,
            },
            "truth_sha256": sha256_file(cfg.truth) if cfg.truth else None,
            "stocks": results,
            "outputs": out.digests(),
        }
        out.write_text("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest
    except BaseException:
        out.remove_all()
        raise
