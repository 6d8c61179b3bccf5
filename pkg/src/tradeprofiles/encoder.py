"""Daily categorical trading states from buy/sell volumes."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

DEFAULT_THETA = Fraction(1, 4)

CATEGORIES = frozenset(
    {
        "Corporations",
        "Financial",
        "FinancialNR",
        "ForeignOrg",
        "Governmental",
        "Households",
        "NonProfit",
    }
)


class EncodingError(ValueError):
    """Invalid transaction data (zero volumes, duplicate keys, bad day)."""


class TradingState(enum.IntEnum):
    BUY = 0
    SELL = 1
    BUYSELL = 2

    @property
    def code(self) -> str:
        return ("b", "s", "bs")[self]

    @classmethod
    def from_code(cls, code: str) -> "TradingState":
        try:
            return {"b": cls.BUY, "s": cls.SELL, "bs": cls.BUYSELL}[code]
        except KeyError:
            raise EncodingError(f"unknown state code {code!r}") from None


@dataclass(frozen=True)
class TransactionRecord:
    investor_id: str
    stock_id: str
    day: int
    v_buy: int
    v_sell: int
    category: str | None = None

    def __post_init__(self):
        if self.v_buy < 0 or self.v_sell < 0:
            raise EncodingError(f"negative volume in {self}")
        if self.v_buy == 0 and self.v_sell == 0:
            raise EncodingError(f"both volumes zero in {self}")
        if self.day < 0:
            raise EncodingError(f"negative day index in {self}")


@dataclass
class DailyStateSeries:
    investor_id: str
    stock_id: str
    states: dict[int, TradingState] = field(default_factory=dict)

    def __post_init__(self):
        if not self.states:
            raise EncodingError(f"empty state series for {self.investor_id}")

    @property
    def first_day(self) -> int:
        return min(self.states)

    @property
    def last_day(self) -> int:
        return max(self.states)

    @property
    def n_active(self) -> int:
        return len(self.states)


def _as_fraction(theta) -> Fraction:
    # limit_denominator recovers the intended rational from float literals like 0.25
    if isinstance(theta, Fraction):
        frac = theta
    elif isinstance(theta, int):
        frac = Fraction(theta)
    else:
        frac = Fraction(theta).limit_denominator(10**9)
    if not 0 < frac < 1:
        raise EncodingError(f"theta must lie in (0, 1), got {theta}")
    return frac


def compute_state(v_buy: int, v_sell: int, theta=DEFAULT_THETA) -> TradingState | None:
    """Classify one day's volumes into a trading state.

    r = (v_buy - v_sell) / (v_buy + v_sell) is compared with theta using
    integer cross-multiplication, so boundaries r = +-theta are exact and
    fall in BUYSELL.
    """
    if v_buy < 0 or v_sell < 0:
        raise EncodingError(f"negative volume ({v_buy}, {v_sell})")
    total = v_buy + v_sell
    if total == 0:
        raise EncodingError("both volumes zero: ratio undefined")
    th = _as_fraction(theta)
    num, den = th.numerator, th.denominator
    diff = (v_buy - v_sell) * den
    bound = num * total
    if diff > bound:
        return TradingState.BUY
    if diff < -bound:
        return TradingState.SELL
    if v_buy > 0 and v_sell > 0:
        return TradingState.BUYSELL
    return None


def build_state_series(
    records: Iterable[TransactionRecord], stock_id: str | None = None, theta=DEFAULT_THETA
) -> list[DailyStateSeries]:
    """Group one stock's records into per-investor state series.

    Output is sorted by investor id. If ``stock_id`` is None every record
    must belong to the same stock.
    """
    seen: set[tuple[str, str, int]] = set()
    dupes: list[tuple[str, str, int]] = []
    by_investor: dict[str, dict[int, TradingState]] = defaultdict(dict)
    stock = stock_id
    for rec in records:
        if stock_id is not None and rec.stock_id != stock_id:
            continue
        if stock is None:
            stock = rec.stock_id
        elif rec.stock_id != stock:
            raise EncodingError(f"mixed stocks {stock!r} and {rec.stock_id!r}; pass stock_id")
        key = (rec.investor_id, rec.stock_id, rec.day)
        if key in seen:
            dupes.append(key)
            continue
        seen.add(key)
        state = compute_state(rec.v_buy, rec.v_sell, theta)
        if state is not None:
            by_investor[rec.investor_id][rec.day] = state
    if dupes:
        raise EncodingError(f"duplicate (investor, stock, day) keys: {sorted(set(dupes))}")
    return [
        DailyStateSeries(inv, stock, dict(sorted(states.items())))
        for inv, states in sorted(by_investor.items())
        if states
    ]


def filter_active(series: list[DailyStateSeries], min_transactions: int = 5) -> list[DailyStateSeries]:
    if min_transactions < 1:
        raise EncodingError("min_transactions must be >= 1")
    return [s for s in series if s.n_active >= min_transactions]
