"""Figure rendering for pipeline reports (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .compare import SweepResult, cluster_size_distribution  # noqa: E402
from .heatmap import PALETTE, HeatmapGrid  # noqa: E402
from .partition import Partition  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

METHOD_STYLE = {
    "single": dict(color="black", marker="o"),
    "average": dict(color="tab:red", marker="o"),
    "complete": dict(color="tab:blue", marker="o"),
    "weighted": dict(color="tab:green", marker="o"),
}


def save(fig, path: str | Path) -> None:
    # no Software/date metadata, so reruns give identical bytes
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def plot_sweeps(sweeps: Mapping[str, SweepResult], path: str | Path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for method, res in sweeps.items():
            style = METHOD_STYLE.get(method, {})
            coarse = [(t, a) for t, a, s in zip(res.thresholds, res.ari_values, res.stages) if s == "coarse"]
            ts, vals = zip(*coarse) if coarse else ((), ())
            ax.plot(ts, vals, lw=0.8, ms=4, mfc="none", label=f"{method} (max {res.best_ari:.3f} at {res.best_threshold:.2f})", **style)
            ax.plot(res.thresholds, res.ari_values, lw=0, ms=1.5, marker=".", color=style.get("color"))
        ax.set_xlabel("cut threshold")
        ax.set_ylabel("adjusted Rand index")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(frameon=False, loc="upper left")
        fig.tight_layout()
        save(fig, path)


def plot_size_distributions(partitions: Mapping[str, Partition], path: str | Path, min_size: int = 2) -> None:
    markers = ["D", "o", "^", "s", "v"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        for k, (name, p) in enumerate(partitions.items()):
            _, density = cluster_size_distribution(p, min_size)
            if not density:
                continue
            sizes = np.array(list(density))
            ax.loglog(sizes, list(density.values()), ls="none", marker=markers[k % len(markers)], mfc="none", label=name)
        ax.set_xlabel("cluster size")
        ax.set_ylabel("probability density")
        ax.legend(frameon=False)
        fig.tight_layout()
        save(fig, path)


def _draw_grid(ax, grid: HeatmapGrid, title: str) -> None:
    cmap = ListedColormap(PALETTE / 255.0)
    # investors on the horizontal axis, trading days on the vertical axis
    ax.imshow(grid.cells.T, cmap=cmap, vmin=0, vmax=3, aspect="auto", interpolation="nearest", origin="lower")
    bounds = [k for k in range(1, len(grid.clusters)) if grid.clusters[k] != grid.clusters[k - 1]]
    for b in bounds:
        ax.axvline(b - 0.5, color="tab:blue", lw=0.3)
    ax.set_xlabel("investor")
    ax.set_ylabel("trading day")
    ax.set_title(title)


def plot_heatmap(grid: HeatmapGrid, path: str | Path, title: str = "") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        _draw_grid(ax, grid, title)
        fig.tight_layout()
        save(fig, path)


def plot_overlap(left: HeatmapGrid, right: HeatmapGrid, path: str | Path, titles=("network clusters", "tree clusters")) -> None:
    """Two grids side by side, widths proportional to their investor counts."""
    widths = [max(len(left.investors), 1), max(len(right.investors), 1)]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8.0, 4.0), sharey=True, gridspec_kw={"width_ratios": widths})
        _draw_grid(axes[0], left, titles[0])
        _draw_grid(axes[1], right, titles[1])
        axes[1].set_ylabel("")
        fig.tight_layout()
        save(fig, path)
