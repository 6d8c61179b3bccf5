"""Transaction CSV ingestion and state-series files."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .encoder import CATEGORIES, DailyStateSeries, EncodingError, TradingState, TransactionRecord

log = logging.getLogger(__name__)

REQUIRED = ("investor_id", "stock_id", "date", "v_buy", "v_sell")


class IngestError(ValueError):
    pass


@dataclass
class Ingested:
    records: list[TransactionRecord]
    dates: list[str]  # day index -> ISO date
    n_rows: int = 0
    n_dropped_zero: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def t_days(self) -> int:
        return len(self.dates)

    @property
    def stocks(self) -> list[str]:
        return sorted({r.stock_id for r in self.records})

    def categories(self) -> dict[str, str | None]:
        out: dict[str, str | None] = {}
        for r in self.records:
            if r.category and r.investor_id not in out:
                out[r.investor_id] = r.category
        return out


def ingest(path: str | Path) -> Ingested:
    """Read a transaction CSV.

    Header: investor_id,stock_id,date,v_buy,v_sell[,category]. Dates are
    ISO-8601 and become day indices over the sorted set of distinct dates in
    the file. Rows sharing (investor, stock, date) are summed; aggregates
    with zero total volume are dropped with a warning.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        missing = [c for c in REQUIRED if c not in header]
        if missing:
            raise IngestError(f"{path}: header lacks columns {missing}")
        col = {name: header.index(name) for name in header}
        has_cat = "category" in col
        volumes: dict[tuple[str, str, str], list[int]] = defaultdict(lambda: [0, 0])
        category: dict[str, str] = {}
        errors: list[str] = []
        warnings: list[str] = []
        unknown_cats: set[str] = set()
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            n_rows += 1
            try:
                inv = row[col["investor_id"]].strip()
                stock = row[col["stock_id"]].strip()
                date = dt.date.fromisoformat(row[col["date"]].strip()).isoformat()
                vb = int(row[col["v_buy"]])
                vs = int(row[col["v_sell"]])
            except (IndexError, ValueError) as exc:
                errors.append(f"line {lineno}: {exc}")
                continue
            if not inv or not stock:
                errors.append(f"line {lineno}: empty investor or stock id")
                continue
            if vb < 0 or vs < 0:
                errors.append(f"line {lineno}: negative volume")
                continue
            if has_cat and len(row) > col["category"]:
                cat = row[col["category"]].strip()
                if cat:
                    if cat not in CATEGORIES:
                        unknown_cats.add(cat)
                    prev = category.setdefault(inv, cat)
                    if prev != cat:
                        warnings.append(f"line {lineno}: investor {inv} category {cat!r} conflicts with {prev!r}; keeping {prev!r}")
            agg = volumes[(inv, stock, date)]
            agg[0] += vb
            agg[1] += vs
    if errors:
        shown = "; ".join(errors[:20])
        more = f" (+{len(errors) - 20} more)" if len(errors) > 20 else ""
        raise IngestError(f"{path}: malformed rows: {shown}{more}")
    if n_rows == 0:
        raise IngestError(f"{path}: no data rows")
    for cat in sorted(unknown_cats):
        warnings.append(f"unknown category label {cat!r} stored verbatim")
    dates = sorted({d for _, _, d in volumes})
    day_of = {d: k for k, d in enumerate(dates)}
    records = []
    dropped = 0
    for (inv, stock, date), (vb, vs) in sorted(volumes.items()):
        if vb == 0 and vs == 0:
            dropped += 1
            continue
        records.append(TransactionRecord(inv, stock, day_of[date], vb, vs, category.get(inv)))
    if dropped:
        warnings.append(f"dropped {dropped} daily aggregates with zero volume")
    for w in warnings:
        log.warning(w)
    return Ingested(records, dates, n_rows, dropped, warnings)


def write_states_csv(series: Sequence[DailyStateSeries], path: str | Path, t_days: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# t_days={t_days}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["investor_id", "stock_id", "day", "state"])
        for s in series:
            for day, state in s.states.items():
                w.writerow([s.investor_id, s.stock_id, day, state.code])


def read_states_csv(path: str | Path) -> tuple[list[DailyStateSeries], int]:
    t_days = None
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                for part in line[1:].split():
                    if part.startswith("t_days="):
                        t_days = int(part.split("=", 1)[1])
            else:
                rows.append(line)
    table = list(csv.reader(rows))
    if not table or table[0] != ["investor_id", "stock_id", "day", "state"]:
        raise IngestError(f"{path}: not a state-series file")
    grouped: dict[tuple[str, str], dict[int, TradingState]] = defaultdict(dict)
    for lineno, row in enumerate(table[1:], start=2):
        try:
            grouped[(row[0], row[1])][int(row[2])] = TradingState.from_code(row[3])
        except (IndexError, ValueError, EncodingError) as exc:
            raise IngestError(f"{path}: bad row {lineno}: {exc}") from exc
    series = [DailyStateSeries(inv, stock, dict(sorted(states.items()))) for (inv, stock), states in sorted(grouped.items())]
    if t_days is None:
        t_days = max((s.last_day for s in series), default=-1) + 1
    return series, t_days
