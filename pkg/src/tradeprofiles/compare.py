"""Partition comparison: Adjusted Rand Index and the dendrogram threshold sweep."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection

from .hclust import Dendrogram, cut
from .partition import Partition

SQRT2 = math.sqrt(2.0)


class CompareError(ValueError):
    pass


@dataclass(frozen=True)
class ContingencyTable:
    counts: dict[tuple[int, int], int]
    row_sums: dict[int, int]
    col_sums: dict[int, int]
    n: int

    @classmethod
    def of(cls, p1: Partition, p2: Partition) -> "ContingencyTable":
        if p1.labels.keys() != p2.labels.keys():
            extra = set(p1.labels).symmetric_difference(p2.labels)
            raise CompareError(f"partitions cover different elements, e.g. {sorted(extra)[:3]}")
        counts = Counter((p1.labels[e], p2.labels[e]) for e in p1.labels)
        return cls(dict(counts), dict(p1.sizes()), dict(p2.sizes()), len(p1))


def _pairs(k: int) -> int:
    return k * (k - 1) // 2


def adjusted_rand_index(p1: Partition, p2: Partition) -> float:
    """Hubert-Arabie ARI.

    Evaluated as one division of two exact integers, so the result is the
    correctly rounded value of the rational ARI. Returns 1.0 when the chance
    correction degenerates (both partitions all-singletons, or both a single
    cluster).
    """
    table = ContingencyTable.of(p1, p2)
    index = sum(_pairs(c) for c in table.counts.values())
    a = sum(_pairs(c) for c in table.row_sums.values())
    b = sum(_pairs(c) for c in table.col_sums.values())
    total = _pairs(table.n)
    num = 2 * index * total - 2 * a * b
    den = (a + b) * total - 2 * a * b
    if den == 0:
        return 1.0
    return num / den


def restrict_partition(p: Partition, subset: Collection[str]) -> Partition:
    """Partition induced on ``subset`` (kept in the order of ``p``)."""
    keep = set(subset)
    missing = keep.difference(p.labels)
    if missing:
        raise CompareError(f"elements not in partition: {sorted(missing)[:5]}")
    elems = [e for e in p.labels if e in keep]
    return Partition.from_labels(elems, [p.labels[e] for e in elems])


@dataclass
class SweepResult:
    thresholds: list[float]
    ari_values: list[float]
    best_threshold: float
    best_ari: float
    method: str
    stages: list[str] = field(default_factory=list)


def _grid(lo: float, hi: float, step: float) -> list[float]:
    k_lo = math.ceil(lo / step - 1e-9)
    k_hi = math.floor(hi / step + 1e-9)
    return [round(k * step, 10) for k in range(max(k_lo, 0), k_hi + 1)]


def evaluate_thresholds(tree: Dendrogram, reference: Partition, thresholds, subset=None) -> list[float]:
    subset = list(reference.labels) if subset is None else subset
    return [adjusted_rand_index(restrict_partition(cut(tree, t), subset), reference) for t in thresholds]


def ari_sweep(
    tree: Dendrogram,
    reference: Partition,
    subset: Collection[str] | None = None,
    coarse_step: float = 0.1,
    fine_step: float = 0.01,
    method: str = "",
    max_height: float = SQRT2,
) -> SweepResult:
    """Scan cut thresholds for the best ARI against ``reference``.

    A coarse grid covers [0, max_height + coarse_step]; a fine grid then
    covers one coarse step either side of the coarse maximizer. Ties go to
    the smallest threshold.
    """
    if not 0 < fine_step <= coarse_step:
        raise CompareError("need 0 < fine_step <= coarse_step")
    subset = list(reference.labels) if subset is None else list(subset)
    if set(subset) != set(reference.labels):
        raise CompareError("reference partition must be defined exactly on the subset")
    scores: dict[float, tuple[float, str]] = {}
    coarse = _grid(0.0, max_height + coarse_step, coarse_step)
    for t, a in zip(coarse, evaluate_thresholds(tree, reference, coarse, subset)):
        scores[t] = (a, "coarse")
    c_best = max(coarse, key=lambda t: (scores[t][0], -t))
    fine = [t for t in _grid(c_best - coarse_step, c_best + coarse_step, fine_step) if t not in scores]
    for t, a in zip(fine, evaluate_thresholds(tree, reference, fine, subset)):
        scores[t] = (a, "fine")
    ts = sorted(scores)
    values = [scores[t][0] for t in ts]
    best = max(range(len(ts)), key=lambda k: (values[k], -ts[k]))
    return SweepResult(ts, values, ts[best], values[best], method, [scores[t][1] for t in ts])


def cluster_size_distribution(p: Partition, min_size: int = 1) -> tuple[dict[int, int], dict[int, float]]:
    """Histogram size -> number of clusters, and its normalization over clusters."""
    sizes = [s for s in p.sizes().values() if s >= min_size]
    hist = dict(sorted(Counter(sizes).items()))
    total = sum(hist.values())
    density = {s: c / total for s, c in hist.items()} if total else {}
    return hist, density


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# method={result.method} best_threshold={result.best_threshold!r} best_ari={result.best_ari!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "ari", "stage"])
        for t, a, s in zip(result.thresholds, result.ari_values, result.stages):
            w.writerow([repr(t), repr(a), s])


def read_sweep_csv(path: str | Path) -> SweepResult:
    meta = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                meta.update(part.split("=", 1) for part in line[1:].split() if "=" in part)
            else:
                lines.append(line)
    rows = list(csv.reader(lines))[1:]
    ts = [float(r[0]) for r in rows]
    vals = [float(r[1]) for r in rows]
    return SweepResult(ts, vals, float(meta["best_threshold"]), float(meta["best_ari"]),
                       meta.get("method", ""), [r[2] for r in rows])


def write_size_distribution_csv(partitions: dict[str, Partition], path: str | Path, min_size: int = 1) -> None:
    """Long-format size distribution: one row per (partition name, size)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["partition", "size", "count", "density"])
        for name, p in partitions.items():
            hist, density = cluster_size_distribution(p, min_size)
            for s, c in hist.items():
                w.writerow([name, s, c, repr(density[s])])
