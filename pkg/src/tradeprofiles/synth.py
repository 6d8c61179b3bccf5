"""Synthetic transaction data with planted cohorts of co-trading investors."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import TradingState, TransactionRecord
from .partition import Partition

STOCK_ID = "SYNTH"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticConfig:
    t_days: int = 253
    n_cohorts: int = 5
    cohort_sizes: tuple[int, ...] = (20, 20, 20, 20, 20)
    n_noise_investors: int = 500
    cohort_activity: float = 0.8
    cohort_day_rate: float = 0.15
    noise_exponent: float = 2.0  # P(k active days) ~ k**-exponent on [min, t_days]
    noise_min_days: int = 5
    state_noise: float = 0.05
    state_probs: tuple[float, float, float] = (0.45, 0.45, 0.10)  # buy, sell, buy/sell
    volume_scale: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.t_days < 10:
            raise ConfigError("t_days must be >= 10")
        if len(self.cohort_sizes) != self.n_cohorts:
            raise ConfigError("cohort_sizes must have n_cohorts entries")
        if any(s < 2 for s in self.cohort_sizes):
            raise ConfigError("cohort sizes must be >= 2")
        for name in ("cohort_activity", "cohort_day_rate", "state_noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if len(self.state_probs) != 3 or min(self.state_probs) < 0 or not np.isclose(sum(self.state_probs), 1.0):
            raise ConfigError("state_probs must be three probabilities summing to 1")
        if self.n_noise_investors < 0:
            raise ConfigError("n_noise_investors must be >= 0")
        if not 1 <= self.noise_min_days <= self.t_days:
            raise ConfigError("noise_min_days must lie in [1, t_days]")
        if self.volume_scale < 1:
            raise ConfigError("volume_scale must be >= 1")


@dataclass
class GroundTruth:
    planted: Partition
    cohort_profiles: list[dict[int, TradingState]] = field(default_factory=list)


def realize_volumes(state: TradingState, volume_scale: int, rng: np.random.Generator) -> tuple[int, int]:
    """Volumes that classify back to ``state`` at theta = 0.25."""
    if volume_scale < 1:
        raise ConfigError("volume_scale must be >= 1")
    v = int(rng.integers(1, volume_scale + 1))
    if state == TradingState.BUY:
        return v, 0
    if state == TradingState.SELL:
        return 0, v
    # |v - w| <= (v + w) / 4  <=>  3v <= 5w and 3w <= 5v
    w = int(rng.integers(-(-3 * v // 5), 5 * v // 3 + 1))
    return v, max(w, 1)


def power_law_days(rng: np.random.Generator, size: int, lo: int, hi: int, exponent: float) -> np.ndarray:
    k = np.arange(lo, hi + 1)
    w = k.astype(float) ** -exponent
    return rng.choice(k, size=size, p=w / w.sum())


def generate(config: SyntheticConfig = SyntheticConfig()) -> tuple[list[TransactionRecord], GroundTruth]:
    rng = np.random.default_rng(config.seed)
    t = config.t_days
    states = np.array(list(TradingState))
    probs = np.asarray(config.state_probs)

    n_members = sum(config.cohort_sizes)
    n_total = n_members + config.n_noise_investors
    width = len(str(n_total - 1))
    # opaque ids so that id order carries no cohort information
    names = [f"inv{k:0{width}d}" for k in rng.permutation(n_total)]

    trades: list[tuple[str, int, TradingState]] = []
    members: list[str] = []
    cohort_of: list[int] = []
    templates: list[dict[int, TradingState]] = []
    cursor = 0
    n_days = max(1, int(round(config.cohort_day_rate * t)))
    for c, size in enumerate(config.cohort_sizes):
        days = np.sort(rng.choice(t, size=n_days, replace=False))
        template = {int(d): TradingState(int(s)) for d, s in zip(days, rng.choice(states, size=n_days, p=probs))}
        templates.append(template)
        for _ in range(size):
            name = names[cursor]
            cursor += 1
            members.append(name)
            cohort_of.append(c)
            for d, s in template.items():
                if rng.random() >= config.cohort_activity:
                    continue
                if rng.random() < config.state_noise:
                    s = TradingState(int(rng.integers(3)))
                trades.append((name, d, s))

    if config.n_noise_investors:
        counts = power_law_days(rng, config.n_noise_investors, config.noise_min_days, t, config.noise_exponent)
        for k in counts:
            name = names[cursor]
            cursor += 1
            days = np.sort(rng.choice(t, size=int(k), replace=False))
            for d, s in zip(days, rng.choice(states, size=int(k), p=probs)):
                trades.append((name, int(d), TradingState(int(s))))

    trades.sort(key=lambda x: (x[0], x[1]))
    records = []
    for name, d, s in trades:
        vb, vs = realize_volumes(s, config.volume_scale, rng)
        records.append(TransactionRecord(name, STOCK_ID, d, vb, vs))
    truth = GroundTruth(Partition.from_labels(members, cohort_of), templates)
    return records, truth


def write_transactions_csv(records, path: str | Path, start_date: str = "2003-01-02") -> None:
    """Transaction CSV in the ingestion format; day k maps to the k-th business day."""
    dates = business_days(start_date, 1 + max((r.day for r in records), default=0))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["investor_id", "stock_id", "date", "v_buy", "v_sell", "category"])
        for r in records:
            w.writerow([r.investor_id, r.stock_id, dates[r.day], r.v_buy, r.v_sell, r.category or ""])


def write_truth_csv(truth: GroundTruth, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["investor_id", "cohort_id"])
        for name, c in truth.planted.labels.items():
            w.writerow([name, c])


def business_days(start: str, n: int) -> list[str]:
    days = np.busday_offset(np.datetime64(start), np.arange(n), roll="forward")
    return [str(d) for d in days]
