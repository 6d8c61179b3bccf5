"""Command-line entry point.

Every stage reads the files written by the previous one, so a full run can
be split into separate invocations with the same outputs as ``pipeline``.

Exit codes: 0 success, 2 invalid configuration or usage, 3 bad input data.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import compare, community, encoder, hclust, heatmap, profiles, svn, synth
from .config import ConfigError, RunConfig, coerce_value, load_config
from .ingest import IngestError, ingest, read_states_csv, write_states_csv
from .partition import PartitionError, read_partition_csv, write_partition_csv
from .pipeline import PipelineError, non_singleton, run_pipeline, sweep_subset

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

log = logging.getLogger("tradeprofiles")

CONFIG_HELP = {
    "input": "transaction CSV",
    "out_dir": "output directory (pipeline, svn and synth)",
    "stocks": "comma-separated stock ids",
    "theta": "buy/sell volume threshold for the mixed state",
    "min_transactions": "minimum active days for the similarity tree",
    "alpha": "family-wise significance level",
    "correction": "bonferroni | fdr",
    "linkage": "linkage used for the combined partition",
    "sweep_linkages": "comma-separated linkages to sweep",
    "coarse_step": "coarse threshold grid step",
    "fine_step": "fine threshold grid step",
    "infomap_seed": "community search seed",
    "infomap_trials": "community search restarts",
    "bonferroni_denominator_convention": "unordered_pairs | ordered_pairs",
    "activity_period": "co-occurrence window: span (overlap of activity spans) | full (whole period)",
    "svn_population": "investors tested in the network: unfiltered | filtered",
    "workers": "threads for the dissimilarity kernel",
    "figures": "render PNG figures (true | false)",
    "write_matrix": "keep the binary dissimilarity matrix (true | false)",
    "truth": "ground-truth CSV (investor_id,cohort_id) for recovery metrics",
}


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("run configuration (flags override --config)")
    group.add_argument("--config", help="key=value configuration file")
    for f in dataclasses.fields(RunConfig):
        default = f.default
        if isinstance(default, tuple):
            shown = ",".join(default) or "all in the input"
        else:
            shown = "none" if default is None else default
        group.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f"cfg_{f.name}",
            metavar=f.name.upper(),
            help=f"{CONFIG_HELP[f.name]} (default: {shown})",
        )
    return parent


def _config(args) -> RunConfig:
    overrides = {}
    for f in dataclasses.fields(RunConfig):
        raw = getattr(args, f"cfg_{f.name}", None)
        if raw is not None:
            overrides[f.name] = coerce_value(f.name, raw)
    return load_config(args.config, **overrides)


def _require(value, flag: str):
    if not value:
        raise ConfigError(f"{flag} is required")
    return value


# ---- subcommands ---------------------------------------------------------


def cmd_ingest_check(args, cfg: RunConfig) -> int:
    data = ingest(_require(cfg.input, "--input"))
    report = {
        "rows": data.n_rows,
        "records": len(data.records),
        "t_days": data.t_days,
        "first_date": data.dates[0],
        "last_date": data.dates[-1],
        "stocks": data.stocks,
        "investors": len({r.investor_id for r in data.records}),
        "dropped_zero_volume": data.n_dropped_zero,
        "warnings": data.warnings,
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_encode(args, cfg: RunConfig) -> int:
    data = ingest(_require(cfg.input, "--input"))
    stock = args.stock or (cfg.stocks[0] if cfg.stocks else None)
    if stock is None:
        if len(data.stocks) != 1:
            raise ConfigError(f"input has stocks {data.stocks}; pass --stock")
        stock = data.stocks[0]
    series = encoder.build_state_series(data.records, stock, cfg.theta)
    write_states_csv(series, args.out, data.t_days)
    print(f"{len(series)} investors, {len(encoder.filter_active(series, cfg.min_transactions))} "
          f"with >= {cfg.min_transactions} active days")
    return EXIT_OK


def cmd_dissim(args, cfg: RunConfig) -> int:
    series, t_days = read_states_csv(args.states)
    filtered = encoder.filter_active(series, cfg.min_transactions)
    if len(filtered) < 2:
        raise profiles.ProfileError("fewer than two investors pass the activity filter")
    vectors = [profiles.build_profile_vector(s, t_days) for s in filtered]
    matrix = profiles.dissimilarity_matrix(vectors, workers=cfg.workers)
    profiles.write_binary(matrix, args.out)
    if args.csv:
        profiles.write_csv(matrix, args.csv)
    print(f"{matrix.n} x {matrix.n} dissimilarity matrix")
    return EXIT_OK


def cmd_hclust(args, cfg: RunConfig) -> int:
    matrix = profiles.read_binary(args.matrix, mmap=True)
    method = args.method or cfg.linkage
    tree = hclust.linkage(matrix, method)
    Path(args.out).write_text(hclust.export_dendrogram(tree) + "\n", encoding="utf-8")
    if args.threshold is not None:
        write_partition_csv(hclust.cut(tree, args.threshold), _require(args.partition_out, "--partition-out"))
    print(f"{method} linkage over {tree.n_leaves} investors")
    return EXIT_OK


def cmd_svn(args, cfg: RunConfig) -> int:
    series, t_days = read_states_csv(args.states)
    if cfg.svn_population == "filtered":
        series = encoder.filter_active(series, cfg.min_transactions)
    window = (0, t_days - 1) if cfg.activity_period == "full" else None
    net = svn.build_svn(series, cfg.correction, cfg.alpha,
                        convention=cfg.bonferroni_denominator_convention, window=window)
    categories = ingest(cfg.input).categories() if cfg.input else {}
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    svn.write_edges_csv(net, out / "svn_edges.csv")
    svn.write_nodes_csv(net, out / "svn_nodes.csv", categories)
    svn.write_audit_csv(net, out / "svn_audit.csv")
    print(f"{len(net.nodes)} nodes, {len(net.edges)} edges, {len(net.audit)} validated links "
          f"of {net.n_tests} tests (threshold {net.threshold:.3e})")
    return EXIT_OK


def cmd_communities(args, cfg: RunConfig) -> int:
    net = svn.read_edges_csv(args.edges)
    if not net.nodes:
        raise community.CommunityError("network has no edges")
    graph = community.WeightedGraph.from_network(net)
    modules = community.infomap_partition(graph, cfg.infomap_seed, cfg.infomap_trials)
    write_partition_csv(modules, args.out, ("node_id", "module_id"))
    print(f"{modules.n_clusters} modules, codelength {community.codelength(graph, modules):.6f} bits")
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    left, right = read_partition_csv(args.left), read_partition_csv(args.right)
    common = [e for e in left.labels if e in right.labels]
    if not args.intersect and (set(left.labels) != set(right.labels)):
        raise compare.CompareError("partitions cover different elements; pass --intersect")
    left = compare.restrict_partition(left, common)
    right = compare.restrict_partition(right, common)
    print(f"elements {len(common)}  ARI {compare.adjusted_rand_index(left, right):.6f}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    tree = hclust.parse_dendrogram(Path(args.dendrogram).read_text(encoding="utf-8"))
    modules = read_partition_csv(args.communities)
    subset = sweep_subset(modules, tree)
    if len(subset) < 2:
        raise compare.CompareError("fewer than two network nodes appear in the dendrogram")
    reference = compare.restrict_partition(modules, subset)
    method = args.method or cfg.linkage
    res = compare.ari_sweep(tree, reference, subset, cfg.coarse_step, cfg.fine_step, method)
    compare.write_sweep_csv(res, args.out)
    if args.partition_out:
        write_partition_csv(hclust.cut(tree, res.best_threshold), args.partition_out)
    print(f"{method}: best ARI {res.best_ari:.4f} at threshold {res.best_threshold:g} over {len(subset)} investors")
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n_noise is not None:
        overrides["n_noise_investors"] = args.n_noise
    if args.cohort_sizes:
        sizes = tuple(int(x) for x in args.cohort_sizes.split(","))
        overrides.update(cohort_sizes=sizes, n_cohorts=len(sizes))
    if args.t_days is not None:
        overrides["t_days"] = args.t_days
    if args.state_noise is not None:
        overrides["state_noise"] = args.state_noise
    try:
        conf = synth.SyntheticConfig(**overrides)
    except synth.ConfigError as exc:
        raise ConfigError(str(exc)) from exc
    records, truth = synth.generate(conf)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    synth.write_transactions_csv(records, out / "transactions.csv")
    synth.write_truth_csv(truth, out / "truth.csv")
    print(f"{len(records)} records, {len(truth.planted)} planted members written to {out}")
    return EXIT_OK


def cmd_heatmap(args, cfg: RunConfig) -> int:
    partition = read_partition_csv(args.partition)
    if args.non_singleton:
        partition = non_singleton(partition)
    series, t_days = read_states_csv(args.states)
    by_id = {s.investor_id: s for s in series}
    missing = [v for v in partition.labels if v not in by_id]
    if missing:
        raise heatmap.HeatmapError(f"no state series for {missing[:5]}")
    grid = heatmap.emit_heatmap(partition, [by_id[v] for v in partition.labels], t_days, args.prefix)
    if cfg.figures:
        from . import plotting

        plotting.plot_heatmap(grid, f"{args.prefix}.png", args.title or "")
    print(f"{len(grid.investors)} x {grid.t_days} grid written to {args.prefix}.csv/.ppm")
    return EXIT_OK


def cmd_pipeline(args, cfg: RunConfig) -> int:
    _require(cfg.input, "--input")
    manifest = run_pipeline(cfg)
    for s in manifest["stocks"]:
        line = f"{s['stock']}: {s['n_investors']} investors, {s['n_filtered']} filtered"
        if "svn" in s:
            line += f", network {s['svn']['n_nodes']} nodes / {s['svn']['n_edges']} edges"
        if "combined" in s:
            c = s["combined"]
            line += f", {c['n_investors_in_clusters']} investors in {c['n_clusters_size_ge_2']} clusters"
        print(line)
        if "recovery" in s:
            print("  recovery " + json.dumps(s["recovery"], sort_keys=True))
    print(f"manifest: {Path(cfg.out_dir) / 'manifest.json'}")
    return EXIT_OK


# ---- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    parser = argparse.ArgumentParser(prog="tradeprofiles", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[parent], help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    add("ingest-check", cmd_ingest_check, "validate a transaction CSV and print a summary")

    p = add("encode", cmd_encode, "daily trading states of one stock")
    p.add_argument("--stock", help="stock id (required when the input has several)")
    p.add_argument("--out", required=True, help="states CSV to write")

    p = add("dissim", cmd_dissim, "pairwise profile dissimilarities of active investors")
    p.add_argument("--states", required=True)
    p.add_argument("--out", required=True, help="binary matrix to write")
    p.add_argument("--csv", help="also write the square matrix as CSV")

    p = add("hclust", cmd_hclust, "hierarchical clustering of a dissimilarity matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--method", choices=sorted(hclust.METHODS), help="defaults to --linkage")
    p.add_argument("--out", required=True, help="dendrogram file (Newick)")
    p.add_argument("--threshold", type=float, help="also cut the tree at this height")
    p.add_argument("--partition-out", help="partition CSV for --threshold")

    p = add("svn", cmd_svn, "statistically validated co-trading network")
    p.add_argument("--states", required=True)

    p = add("communities", cmd_communities, "map-equation communities of a validated network")
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True)

    p = add("compare", cmd_compare, "adjusted Rand index of two partition CSVs")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--intersect", action="store_true", help="compare on the common elements only")

    p = add("sweep", cmd_sweep, "scan dendrogram cuts against network communities")
    p.add_argument("--dendrogram", required=True)
    p.add_argument("--communities", required=True)
    p.add_argument("--method", help="label stored in the sweep file (defaults to --linkage)")
    p.add_argument("--out", required=True)
    p.add_argument("--partition-out", help="write the cut at the best threshold")

    p = add("synth", cmd_synth, "planted-cohort synthetic transactions with ground truth")
    p.add_argument("--seed", type=int, help="default 0")
    p.add_argument("--n-noise", type=int, help="background investors (default 500)")
    p.add_argument("--cohort-sizes", help="comma-separated sizes (default 20,20,20,20,20)")
    p.add_argument("--t-days", type=int, help="trading days (default 253)")
    p.add_argument("--state-noise", type=float, help="per-trade state flip probability (default 0.05)")

    p = add("heatmap", cmd_heatmap, "trading-profile grid of a partition (CSV, PPM, PNG)")
    p.add_argument("--partition", required=True)
    p.add_argument("--states", required=True)
    p.add_argument("--prefix", required=True, help="writes <prefix>.csv, .ppm and .png")
    p.add_argument("--non-singleton", action="store_true", help="drop clusters of size one")
    p.add_argument("--title")

    add("pipeline", cmd_pipeline, "run every stage and write a manifest")
    return parser


USAGE_ERRORS = (ConfigError, heatmap.HeatmapError, synth.ConfigError)
DATA_ERRORS = (
    IngestError, encoder.EncodingError, profiles.ProfileError, hclust.LinkageError, svn.SVNError,
    community.CommunityError, compare.CompareError, PartitionError, PipelineError, OSError, ValueError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        code = EXIT_USAGE if isinstance(exc.cause, USAGE_ERRORS) else EXIT_DATA
        print(f"error: {exc}", file=sys.stderr)
        return code
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
