"""Statistically validated co-occurrence networks.

For every pair of investors trading the same stock, the days on which
investor i is in state A and investor j in state B are counted inside the
intersection of their activity periods, and the count is tested against
the hypergeometric null of random co-occurrence. Pairs whose tests survive
a Bonferroni or Benjamini-Hochberg correction become weighted edges.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Mapping, Sequence

import numba
import numpy as np

from .encoder import DailyStateSeries, TradingState

STATES = (TradingState.BUY, TradingState.SELL, TradingState.BUYSELL)
COMBOS: tuple[tuple[TradingState, TradingState], ...] = tuple(product(STATES, STATES))
COMBO_TOKENS = tuple(f"{a.code}_{b.code}" for a, b in COMBOS)
TOKEN_INDEX = {tok: k for k, tok in enumerate(COMBO_TOKENS)}

CORRECTIONS = ("bonferroni", "fdr")
CONVENTIONS = ("unordered_pairs", "ordered_pairs")


class SVNError(ValueError):
    pass


@dataclass(frozen=True)
class CooccurrenceCount:
    pair: tuple[str, str]
    combo: tuple[TradingState, TradingState]
    n_t: int
    n_a: int
    n_b: int
    n_ab: int


def count_cooccurrences(
    si: DailyStateSeries, sj: DailyStateSeries, window: tuple[int, int] | None = None
) -> list[CooccurrenceCount]:
    """Counts for all nine (state of i, state of j) combos on the overlap of
    the two activity periods; empty if the periods do not overlap.

    By default an activity period is the first-to-last trading day span.
    Passing ``window=(first, last)`` treats that common window as every
    investor's activity period instead.
    """
    if si.investor_id == sj.investor_id:
        raise SVNError(f"cannot pair investor {si.investor_id!r} with itself")
    if window is None:
        lo = max(si.first_day, sj.first_day)
        hi = min(si.last_day, sj.last_day)
    else:
        lo, hi = window
    if lo > hi:
        return []
    n_t = hi - lo + 1
    in_i = {s: {d for d, st in si.states.items() if st == s and lo <= d <= hi} for s in STATES}
    in_j = {s: {d for d, st in sj.states.items() if st == s and lo <= d <= hi} for s in STATES}
    pair = (si.investor_id, sj.investor_id)
    return [
        CooccurrenceCount(pair, (a, b), n_t, len(in_i[a]), len(in_j[b]), len(in_i[a] & in_j[b]))
        for a, b in COMBOS
    ]


# ---- hypergeometric tail ----------------------------------------------

_LOGFACT = np.zeros(1)


def log_factorials(n: int) -> np.ndarray:
    """Table of log(k!) for k = 0..n, grown on demand."""
    global _LOGFACT
    if _LOGFACT.size <= n:
        size = max(n + 1, 2 * _LOGFACT.size, 512)
        _LOGFACT = np.array([math.lgamma(k + 1) for k in range(size)])
    return _LOGFACT


def _check_counts(n_t, n_a, n_b, n_ab) -> None:
    if not (0 <= n_a <= n_t and 0 <= n_b <= n_t):
        raise SVNError(f"invalid marginals n_t={n_t}, n_a={n_a}, n_b={n_b}")
    if not max(0, n_a + n_b - n_t) <= n_ab <= min(n_a, n_b):
        raise SVNError(f"n_ab={n_ab} outside support for n_t={n_t}, n_a={n_a}, n_b={n_b}")


# below this C(n_t, n_b) every term of the tail is an integer held exactly
# in float64, and the intermediate products in _binom stay under 2**53
_EXACT_LIMIT = math.log(1e12)


@numba.njit(cache=True)
def _binom(n, k):
    if k < 0 or k > n:
        return 0.0
    k = min(k, n - k)
    c = 1.0
    for i in range(k):
        c = c * (n - i) / (i + 1)
    return c


@numba.njit(cache=True)
def _log_pmf(lf, n_t, n_a, n_b, x, log_total):
    return (
        lf[n_a] - lf[x] - lf[n_a - x]
        + lf[n_t - n_a] - lf[n_b - x] - lf[n_t - n_a - n_b + x]
        - log_total
    )


@numba.njit(cache=True)
def _tail(lf, n_t, n_a, n_b, n_ab, allow_exact):
    lower = max(0, n_a + n_b - n_t)
    if n_ab <= lower:
        return 1.0
    upper = min(n_a, n_b)
    # the tail is symmetric in (n_a, n_b); fix one order so both give the same float
    key_a, key_b = min(n_a, n_t - n_a), min(n_b, n_t - n_b)
    if key_a < key_b or (key_a == key_b and n_a < n_b):
        n_a, n_b = n_b, n_a
    log_total = lf[n_t] - lf[n_b] - lf[n_t - n_b]
    if allow_exact and log_total < _EXACT_LIMIT:
        hits = 0.0
        for x in range(n_ab, upper + 1):
            hits += _binom(n_a, x) * _binom(n_t - n_a, n_b - x)
        return hits / _binom(n_t, n_b)
    if n_ab * n_t <= n_a * n_b:
        # below the mean: 1 - P(X < n_ab) is the more accurate form
        x = n_ab - 1
        total = 1.0
        term = 1.0
        while x > lower:
            term *= x * (n_t - n_a - n_b + x) / ((n_a - x + 1.0) * (n_b - x + 1.0))
            total += term
            x -= 1
        p = 1.0 - math.exp(_log_pmf(lf, n_t, n_a, n_b, n_ab - 1, log_total)) * total
        return min(max(p, 0.0), 1.0)
    # sum the upper tail relative to its first term via the pmf ratio
    total = 1.0
    term = 1.0
    for x in range(n_ab, upper):
        term *= (n_a - x) * (n_b - x) / ((x + 1.0) * (n_t - n_a - n_b + x + 1.0))
        total += term
    p = math.exp(_log_pmf(lf, n_t, n_a, n_b, n_ab, log_total)) * total
    return min(p, 1.0)


@numba.njit(cache=True)
def _tail_many(lf, n_t, n_a, n_b, n_ab, allow_exact, out):
    for k in range(n_t.size):
        out[k] = _tail(lf, n_t[k], n_a[k], n_b[k], n_ab[k], allow_exact)


def hypergeom_pvalue(n_t: int, n_a: int, n_b: int, n_ab: int, log_space_only: bool = False) -> float:
    """P(X >= n_ab) for X ~ Hypergeometric(population n_t, n_a successes, n_b draws).

    Small cases are summed as exact integers (one rounding, at the final
    division); larger ones in log space from a log-factorial table.
    ``log_space_only`` forces the log-space route.
    """
    _check_counts(n_t, n_a, n_b, n_ab)
    return float(_tail(log_factorials(n_t), n_t, n_a, n_b, n_ab, not log_space_only))


def hypergeom_pvalues(n_t, n_a, n_b, n_ab, log_space_only: bool = False) -> np.ndarray:
    """Vectorized :func:`hypergeom_pvalue`; inputs are assumed valid."""
    n_t, n_a, n_b, n_ab = (np.ascontiguousarray(x, dtype=np.int64) for x in (n_t, n_a, n_b, n_ab))
    out = np.empty(n_t.size, dtype=np.float64)
    if n_t.size:
        _tail_many(log_factorials(int(n_t.max())), n_t, n_a, n_b, n_ab, not log_space_only, out)
    return out


# ---- multiple-testing corrections -------------------------------------


def bonferroni_threshold(n_investors: int, alpha: float = 0.01, convention: str = "unordered_pairs") -> float:
    """Per-test threshold alpha / (number of tests) for one stock.

    ``unordered_pairs`` counts 9 * N (N - 1) / 2 tests; ``ordered_pairs``
    counts 9 * N (N - 1).
    """
    if n_investors < 2:
        raise SVNError("need at least two investors")
    if convention == "unordered_pairs":
        return 2.0 * alpha / (9.0 * n_investors * (n_investors - 1))
    if convention == "ordered_pairs":
        return alpha / (9.0 * n_investors * (n_investors - 1))
    raise SVNError(f"unknown convention {convention!r}")


def fdr_threshold(pvalues: Sequence[float], per_test_alpha: float) -> float:
    """Benjamini-Hochberg step-up cut for ascending ``pvalues``.

    Returns p_k for the largest (1-based) k with p_k < k * per_test_alpha,
    or 0.0 when no k qualifies. Tests with p <= the result are accepted.
    """
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return 0.0
    if np.any(np.diff(p) < 0):
        raise SVNError("p-values must be sorted ascending")
    ranks = np.arange(1, p.size + 1)
    passing = np.flatnonzero(p < ranks * per_test_alpha)
    if passing.size == 0:
        return 0.0
    return float(p[passing[-1]])


# ---- network ----------------------------------------------------------


@dataclass(frozen=True)
class Edge:
    i: str
    j: str
    combos: tuple[str, ...]
    min_p: float

    @property
    def weight(self) -> int:
        return len(self.combos)


@dataclass(frozen=True)
class AuditRecord:
    i: str
    j: str
    combo: str
    n_t: int
    n_a: int
    n_b: int
    n_ab: int
    p: float


@dataclass
class ValidatedNetwork:
    nodes: list[str]
    edges: list[Edge]
    correction: str
    threshold: float
    n_tests: int
    audit: list[AuditRecord] = field(default_factory=list)

    def adjacency(self) -> dict[str, dict[str, int]]:
        adj: dict[str, dict[str, int]] = {v: {} for v in self.nodes}
        for e in self.edges:
            adj[e.i][e.j] = e.weight
            adj[e.j][e.i] = e.weight
        return adj


def _indicators(series: Sequence[DailyStateSeries], t_days: int) -> np.ndarray:
    x = np.zeros((3, len(series), t_days), dtype=np.float32)
    for row, s in enumerate(series):
        for day, state in s.states.items():
            x[int(state), row, day] = 1.0
    return x


def pairwise_tests(series: Sequence[DailyStateSeries], window: tuple[int, int] | None = None, block: int = 256):
    """All executed tests as flat arrays (row i, row j, combo, n_t, n_a, n_b, n_ab).

    Rows index ``series``; every pair i < j with overlapping activity
    contributes nine tests. ``window`` as in :func:`count_cooccurrences`.
    """
    n = len(series)
    t_days = max(s.last_day for s in series) + 1
    if window is not None:
        t_days = max(t_days, window[1] + 1)
    x = _indicators(series, t_days)
    cum = np.zeros((3, n, t_days + 1), dtype=np.int64)
    np.cumsum(x, axis=2, out=cum[:, :, 1:], dtype=np.int64)
    if window is None:
        first = np.array([s.first_day for s in series])
        last = np.array([s.last_day for s in series])
    else:
        first = np.full(n, window[0])
        last = np.full(n, window[1])
    chunks = []
    for b0 in range(0, n - 1, block):
        b1 = min(b0 + block, n - 1)
        rows = np.arange(b0, b1)
        # co-occurrence days lie inside both activity periods, so the full-year
        # product already equals the windowed count
        co = np.stack([np.rint(x[a, b0:b1] @ x[b].T) for a, b in COMBOS]).astype(np.int64)
        ii, jj = np.nonzero(np.arange(n)[None, :] > rows[:, None])
        ii_abs = ii + b0
        lo = np.maximum(first[ii_abs], first[jj])
        hi = np.minimum(last[ii_abs], last[jj])
        keep = lo <= hi
        ii, ii_abs, jj, lo, hi = ii[keep], ii_abs[keep], jj[keep], lo[keep], hi[keep]
        n_t = hi - lo + 1
        for k, (a, b) in enumerate(COMBOS):
            n_a = cum[a, ii_abs, hi + 1] - cum[a, ii_abs, lo]
            n_b = cum[b, jj, hi + 1] - cum[b, jj, lo]
            chunks.append((ii_abs, jj, np.full(ii_abs.size, k), n_t, n_a, n_b, co[k, ii, jj]))
    if not chunks:
        empty = np.zeros(0, dtype=np.int64)
        return (empty,) * 7
    return tuple(np.concatenate([c[f] for c in chunks]).astype(np.int64) for f in range(7))


def build_svn(
    series: Sequence[DailyStateSeries],
    correction: str = "bonferroni",
    alpha: float = 0.01,
    n_investors: int | None = None,
    convention: str = "unordered_pairs",
    window: tuple[int, int] | None = None,
) -> ValidatedNetwork:
    """Test every overlapping pair on all nine combos and keep validated ones.

    The Bonferroni threshold uses ``n_investors`` (default: ``len(series)``,
    i.e. everyone trading the stock at least once). FDR pools all tests of
    the call. Combos are oriented from the lower to the higher investor id.
    ``window`` as in :func:`count_cooccurrences`.
    """
    if correction not in CORRECTIONS:
        raise SVNError(f"unknown correction {correction!r}")
    if len(series) < 2:
        raise SVNError("need at least two series")
    ordered = sorted(series, key=lambda s: s.investor_id)
    ids = [s.investor_id for s in ordered]
    if len(set(ids)) != len(ids):
        raise SVNError("duplicate investor ids in series")
    n_s = n_investors if n_investors is not None else len(ordered)
    alpha_b = bonferroni_threshold(n_s, alpha, convention)

    ii, jj, kk, n_t, n_a, n_b, n_ab = pairwise_tests(ordered, window)
    n_tests = int(ii.size)
    # only n_ab above the support minimum can give p < 1
    live = n_ab > np.maximum(0, n_a + n_b - n_t)
    p = np.ones(n_tests)
    p[live] = hypergeom_pvalues(n_t[live], n_a[live], n_b[live], n_ab[live])

    if correction == "bonferroni":
        threshold = alpha_b
        accepted = p < alpha_b
    else:
        # a p-value at rank k passes only if p < k*alpha_b <= n_tests*alpha_b,
        # so larger values cannot affect k_max and are left out of the sort
        cap = n_tests * alpha_b
        pool = np.sort(p[p < cap])
        threshold = fdr_threshold(pool, alpha_b)
        accepted = p <= threshold if threshold > 0 else np.zeros(n_tests, dtype=bool)

    idx = np.flatnonzero(accepted)
    order = np.lexsort((kk[idx], jj[idx], ii[idx]))
    idx = idx[order]
    audit = [
        AuditRecord(ids[ii[t]], ids[jj[t]], COMBO_TOKENS[kk[t]],
                    int(n_t[t]), int(n_a[t]), int(n_b[t]), int(n_ab[t]), float(p[t]))
        for t in idx
    ]
    edges: list[Edge] = []
    for rec in audit:
        if edges and (edges[-1].i, edges[-1].j) == (rec.i, rec.j):
            last = edges[-1]
            edges[-1] = Edge(last.i, last.j, last.combos + (rec.combo,), min(last.min_p, rec.p))
        else:
            edges.append(Edge(rec.i, rec.j, (rec.combo,), rec.p))
    nodes = sorted({e.i for e in edges} | {e.j for e in edges})
    return ValidatedNetwork(nodes, edges, correction, threshold, n_tests, audit)


def connected_components(net: ValidatedNetwork) -> list[set[str]]:
    """Components sorted by decreasing size, then by smallest member id."""
    adj = net.adjacency()
    seen: set[str] = set()
    comps = []
    for start in net.nodes:
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        seen.add(start)
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    comp.add(w)
                    stack.append(w)
        comps.append(comp)
    comps.sort(key=lambda c: (-len(c), min(c)))
    return comps


# ---- file formats -------------------------------------------------------

EDGE_HEADER = ("investor_i", "investor_j", "validated_combos", "weight", "min_p")
TOKEN_LINE = "# validated_combos tokens (state of investor_i _ state of investor_j): " + " ".join(COMBO_TOKENS)


def write_edges_csv(net: ValidatedNetwork, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(TOKEN_LINE + "\n")
        fh.write(f"# correction={net.correction} threshold={net.threshold!r} n_tests={net.n_tests}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_HEADER)
        for e in net.edges:
            w.writerow([e.i, e.j, ";".join(e.combos), e.weight, repr(e.min_p)])


def read_edges_csv(path: str | Path, nodes: Sequence[str] | None = None) -> ValidatedNetwork:
    meta: dict[str, str] = {}
    edges = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                for part in line[1:].split():
                    if "=" in part:
                        k, v = part.split("=", 1)
                        meta[k] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    if not rows or tuple(rows[0]) != EDGE_HEADER:
        raise SVNError(f"{path}: missing edge-list header")
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            combos = tuple(row[2].split(";"))
            if any(c not in TOKEN_INDEX for c in combos):
                raise ValueError(f"unknown combo token in {row[2]!r}")
            if int(row[3]) != len(combos):
                raise ValueError("weight does not match combo count")
            edges.append(Edge(row[0], row[1], combos, float(row[4])))
        except (IndexError, ValueError) as exc:
            raise SVNError(f"{path}: bad edge row {lineno}: {exc}") from exc
    node_set = {e.i for e in edges} | {e.j for e in edges}
    if nodes is not None:
        node_set |= set(nodes)
    return ValidatedNetwork(
        sorted(node_set),
        edges,
        meta.get("correction", "bonferroni"),
        float(meta.get("threshold", "nan")),
        int(meta.get("n_tests", "0")),
    )


def write_nodes_csv(net: ValidatedNetwork, path: str | Path, categories: Mapping[str, str | None] | None = None) -> None:
    categories = categories or {}
    strength: dict[str, int] = {v: 0 for v in net.nodes}
    degree: dict[str, int] = {v: 0 for v in net.nodes}
    for e in net.edges:
        for v in (e.i, e.j):
            strength[v] += e.weight
            degree[v] += 1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["investor_id", "category", "degree", "strength"])
        for v in net.nodes:
            w.writerow([v, categories.get(v) or "", degree[v], strength[v]])


def write_audit_csv(net: ValidatedNetwork, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# correction={net.correction} threshold={net.threshold!r} n_tests={net.n_tests}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["investor_i", "investor_j", "combo", "n_t", "n_a", "n_b", "n_ab", "p"])
        for r in net.audit:
            w.writerow([r.i, r.j, r.combo, r.n_t, r.n_a, r.n_b, r.n_ab, repr(r.p)])
