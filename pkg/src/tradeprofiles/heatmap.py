"""Trading-profile grids: one row per investor, one column per day.

Colors follow the usual convention for these plots: red buy, green sell,
white buy/sell, black no trade.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import DailyStateSeries
from .partition import Partition

INACTIVE, BUY, SELL, BUYSELL = 0, 1, 2, 3
CELL_CODES = {INACTIVE: ".", BUY: "b", SELL: "s", BUYSELL: "bs"}
PALETTE = np.array(
    [
        [0, 0, 0],  # inactive
        [255, 0, 0],  # buy
        [0, 255, 0],  # sell
        [255, 255, 255],  # buy/sell
    ],
    dtype=np.uint8,
)


class HeatmapError(ValueError):
    pass


@dataclass
class HeatmapGrid:
    investors: list[str]
    clusters: list[int]
    cells: np.ndarray  # (n_investors, t_days) int8 codes

    @property
    def t_days(self) -> int:
        return self.cells.shape[1]

    def rgb(self) -> np.ndarray:
        return PALETTE[self.cells]


def heatmap_grid(partition: Partition, series: Sequence[DailyStateSeries], t_days: int) -> HeatmapGrid:
    """Rows grouped by cluster; larger clusters first, then by cluster id;
    investors sorted by id inside a cluster."""
    missing = [s.investor_id for s in series if s.investor_id not in partition.labels]
    if missing:
        raise HeatmapError(f"partition does not cover investors {missing[:5]}")
    by_id = {s.investor_id: s for s in series}
    sizes = partition.sizes()
    members = sorted(by_id, key=lambda v: (-sizes[partition.labels[v]], partition.labels[v], v))
    cells = np.zeros((len(members), t_days), dtype=np.int8)
    for row, inv in enumerate(members):
        for day, state in by_id[inv].states.items():
            if day >= t_days:
                raise HeatmapError(f"day {day} of {inv} outside [0, {t_days})")
            cells[row, day] = int(state) + 1
    return HeatmapGrid(members, [partition.labels[v] for v in members], cells)


def write_grid_csv(grid: HeatmapGrid, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["investor_id", "cluster_id"] + [f"d{k}" for k in range(grid.t_days)])
        for inv, c, row in zip(grid.investors, grid.clusters, grid.cells):
            w.writerow([inv, c] + [CELL_CODES[int(x)] for x in row])


def write_ppm(grid: HeatmapGrid, path: str | Path) -> None:
    """Binary PPM (P6), one pixel per (investor, day)."""
    rgb = grid.rgb()
    height, width = grid.cells.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+255\s", data)
    if not m:
        raise HeatmapError(f"{path}: not an 8-bit binary PPM")
    width, height = int(m.group(1)), int(m.group(2))
    pixels = np.frombuffer(data, dtype=np.uint8, offset=m.end())
    return pixels[: width * height * 3].reshape(height, width, 3)


def emit_heatmap(
    partition: Partition, series: Sequence[DailyStateSeries], t_days: int, prefix: str | Path
) -> HeatmapGrid:
    """Build the grid and write ``<prefix>.csv`` and ``<prefix>.ppm``."""
    grid = heatmap_grid(partition, series, t_days)
    write_grid_csv(grid, f"{prefix}.csv")
    write_ppm(grid, f"{prefix}.ppm")
    return grid
