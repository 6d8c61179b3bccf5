"""Two-level map equation (Infomap) on undirected weighted graphs.

Flow is the stationary distribution of a random walk on an undirected
graph: node visit rate = strength / total strength, exit rate of a module =
cut weight / total strength. No teleportation is used.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .partition import Partition
from .svn import ValidatedNetwork

_EPS = 1e-10


class CommunityError(ValueError):
    pass


@dataclass
class WeightedGraph:
    nodes: list[str]
    edges: list[tuple[str, str, float]]

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise CommunityError("duplicate nodes")
        known = set(self.nodes)
        seen = set()
        for u, v, w in self.edges:
            if u == v:
                raise CommunityError(f"self-loop on {u!r}")
            if u not in known or v not in known:
                raise CommunityError(f"edge ({u!r}, {v!r}) references an unknown node")
            if w <= 0:
                raise CommunityError(f"edge ({u!r}, {v!r}) has nonpositive weight {w}")
            key = (u, v) if u < v else (v, u)
            if key in seen:
                raise CommunityError(f"duplicate edge {key}")
            seen.add(key)

    @classmethod
    def from_network(cls, net: ValidatedNetwork) -> "WeightedGraph":
        return cls(list(net.nodes), [(e.i, e.j, float(e.weight)) for e in net.edges])

    def index(self) -> tuple[dict[str, int], list[dict[int, float]]]:
        pos = {v: k for k, v in enumerate(self.nodes)}
        adj: list[dict[int, float]] = [dict() for _ in self.nodes]
        for u, v, w in self.edges:
            adj[pos[u]][pos[v]] = w
            adj[pos[v]][pos[u]] = w
        return pos, adj


def _plogp(x: float) -> float:
    return x * math.log2(x) if x > 0 else 0.0


def _components(adj: Sequence[Mapping[int, float]]) -> list[int]:
    comp = [-1] * len(adj)
    c = 0
    for start in range(len(adj)):
        if comp[start] >= 0:
            continue
        comp[start] = c
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if comp[v] < 0:
                    comp[v] = c
                    stack.append(v)
        c += 1
    return comp


def _codelength_labels(adj: Sequence[Mapping[int, float]], labels: Sequence[int]) -> float:
    strength = [sum(a.values()) for a in adj]
    total = sum(strength)
    if total == 0:
        return 0.0
    exit_w: dict[int, float] = defaultdict(float)
    flow: dict[int, float] = defaultdict(float)
    for u, nbrs in enumerate(adj):
        m = labels[u]
        flow[m] += strength[u] / total
        for v, w in nbrs.items():
            if labels[v] != m:
                exit_w[m] += w
    q = {m: exit_w.get(m, 0.0) / total for m in flow}
    return (
        _plogp(sum(q.values()))
        - 2.0 * sum(_plogp(x) for x in q.values())
        - sum(_plogp(s / total) for s in strength)
        + sum(_plogp(q[m] + flow[m]) for m in flow)
    )


def codelength(g: WeightedGraph, p: Partition) -> float:
    """Two-level description length in bits per step of the walk."""
    missing = [v for v in g.nodes if v not in p.labels]
    if missing:
        raise CommunityError(f"partition does not label nodes {missing[:5]}")
    _, adj = g.index()
    return _codelength_labels(adj, [p.labels[v] for v in g.nodes])


class _Level:
    """Greedy optimizer state over one level of (super)nodes."""

    def __init__(self, adj, flow, exit_self, total):
        self.adj = adj  # list[dict[int, float]] between supernodes (raw weights)
        self.flow = flow  # visit rate of each supernode
        self.exit_self = exit_self  # raw cut weight of each supernode
        self.total = total
        n = len(adj)
        self.module = list(range(n))
        self.mod_flow = list(flow)
        self.mod_exit = list(exit_self)  # raw cut weights
        self.mod_members = [1] * n
        self.sum_q = sum(exit_self) / total
        self.sum_plogp_q = sum(_plogp(e / total) for e in exit_self)
        self.sum_plogp_qf = sum(_plogp(e / total + f) for e, f in zip(exit_self, flow))

    def _terms_after(self, m: int, new_exit: float, new_flow: float):
        old_q = self.mod_exit[m] / self.total
        new_q = new_exit / self.total
        return (
            new_q - old_q,
            _plogp(new_q) - _plogp(old_q),
            _plogp(new_q + new_flow) - _plogp(old_q + self.mod_flow[m]),
        )

    def _delta(self, u, old, new, w_old, w_new):
        t_old = self._terms_after(old, self.mod_exit[old] - self.exit_self[u] + 2 * w_old, self.mod_flow[old] - self.flow[u])
        if new < 0:
            new_q = self.exit_self[u] / self.total
            t_new = (new_q, _plogp(new_q), _plogp(new_q + self.flow[u]))
        else:
            t_new = self._terms_after(new, self.mod_exit[new] + self.exit_self[u] - 2 * w_new, self.mod_flow[new] + self.flow[u])
        dq = t_old[0] + t_new[0]
        return (
            _plogp(self.sum_q + dq) - _plogp(self.sum_q)
            - 2.0 * (t_old[1] + t_new[1])
            + (t_old[2] + t_new[2])
        ), t_old, t_new

    def move_nodes(self, rng: np.random.Generator, max_sweeps: int = 100) -> bool:
        moved_any = False
        n = len(self.adj)
        empty: list[int] = []
        for _ in range(max_sweeps):
            moved = 0
            for u in rng.permutation(n):
                old = self.module[u]
                links: dict[int, float] = defaultdict(float)
                for v, w in self.adj[u].items():
                    links[self.module[v]] += w
                w_old = links.get(old, 0.0)
                best, best_delta, best_terms = old, 0.0, None
                candidates = sorted(m for m in links if m != old)
                if self.mod_members[old] > 1:
                    candidates.append(-1)
                for m in candidates:
                    d, t_old, t_new = self._delta(u, old, m, w_old, links.get(m, 0.0))
                    if d < best_delta - _EPS:
                        best, best_delta, best_terms = m, d, (t_old, t_new)
                if best == old:
                    continue
                if best < 0:
                    best = empty.pop() if empty else self._new_module()
                w_new = links.get(best, 0.0)
                t_old, t_new = best_terms
                self.sum_q += t_old[0] + t_new[0]
                self.sum_plogp_q += t_old[1] + t_new[1]
                self.sum_plogp_qf += t_old[2] + t_new[2]
                self.mod_exit[old] += -self.exit_self[u] + 2 * w_old
                self.mod_flow[old] -= self.flow[u]
                self.mod_members[old] -= 1
                self.mod_exit[best] += self.exit_self[u] - 2 * w_new
                self.mod_flow[best] += self.flow[u]
                self.mod_members[best] += 1
                self.module[u] = best
                if self.mod_members[old] == 0:
                    self.mod_exit[old] = 0.0
                    self.mod_flow[old] = 0.0
                    empty.append(old)
                moved += 1
            if not moved:
                break
            moved_any = True
        return moved_any

    def _new_module(self) -> int:
        self.mod_flow.append(0.0)
        self.mod_exit.append(0.0)
        self.mod_members.append(0)
        return len(self.mod_flow) - 1


def _aggregate(adj, flow, module):
    ids = {m: k for k, m in enumerate(sorted(set(module)))}
    k = len(ids)
    new_adj: list[dict[int, float]] = [defaultdict(float) for _ in range(k)]
    new_flow = [0.0] * k
    for u, nbrs in enumerate(adj):
        mu = ids[module[u]]
        new_flow[mu] += flow[u]
        for v, w in nbrs.items():
            mv = ids[module[v]]
            if mu != mv:
                new_adj[mu][mv] += w
    new_adj = [dict(a) for a in new_adj]
    exit_self = [sum(a.values()) for a in new_adj]
    return new_adj, new_flow, exit_self, [ids[m] for m in module]


def _optimize(adj, strength, total, rng) -> list[int]:
    n = len(adj)
    flow = [s / total for s in strength]
    labels = list(range(n))
    best_len = _codelength_labels(adj, labels)
    for _ in range(50):
        # fine pass: single-node moves from the current partition
        fine = _Level(adj, flow, list(strength), total)
        fine.module = list(labels)
        _reset_modules(fine)
        fine.move_nodes(rng)
        labels = list(fine.module)
        # coarse passes: merge whole modules as supernodes
        level_adj, level_flow, level_exit, node_to_super = _aggregate(adj, flow, labels)
        while len(level_adj) > 1:
            lvl = _Level(level_adj, level_flow, level_exit, total)
            if not lvl.move_nodes(rng):
                break
            labels = [lvl.module[s] for s in node_to_super]
            level_adj, level_flow, level_exit, node_to_super = _aggregate(adj, flow, labels)
        new_len = _codelength_labels(adj, labels)
        if new_len >= best_len - _EPS:
            break
        best_len = new_len
    return labels


def _reset_modules(level: _Level) -> None:
    n = len(level.adj)
    k = max(level.module) + 1 if n else 0
    level.mod_flow = [0.0] * max(k, n)
    level.mod_exit = [0.0] * max(k, n)
    level.mod_members = [0] * max(k, n)
    for u in range(n):
        m = level.module[u]
        level.mod_flow[m] += level.flow[u]
        level.mod_members[m] += 1
        for v, w in level.adj[u].items():
            if level.module[v] != m:
                level.mod_exit[m] += w
    total = level.total
    level.sum_q = sum(level.mod_exit) / total
    level.sum_plogp_q = sum(_plogp(e / total) for e in level.mod_exit)
    level.sum_plogp_qf = sum(
        _plogp(e / total + f) for e, f, c in zip(level.mod_exit, level.mod_flow, level.mod_members) if c
    )


def _canonical(labels: Iterable[int]) -> tuple[int, ...]:
    remap: dict[int, int] = {}
    return tuple(remap.setdefault(x, len(remap)) for x in labels)


def infomap_partition(g: WeightedGraph, seed: int = 0, n_trials: int = 10) -> Partition:
    """Lowest-codelength partition over ``n_trials`` randomized greedy runs.

    Each run moves single nodes to the neighbouring module with the largest
    codelength decrease, then merges modules as supernodes, and repeats from
    the merged result until the codelength stops improving. The
    all-singletons and one-module-per-component partitions are always
    candidates too. Ties go to the lexicographically smallest canonical
    labeling, so the result depends only on (graph, seed, n_trials).
    """
    if not g.nodes:
        raise CommunityError("empty graph")
    _, adj = g.index()
    n = len(adj)
    strength = [sum(a.values()) for a in adj]
    total = sum(strength)
    if total == 0:
        return Partition.from_labels(g.nodes, range(n))

    candidates = [_canonical(range(n)), _canonical(_components(adj))]
    rng = np.random.default_rng(seed)
    for trial_seed in rng.integers(0, 2**63 - 1, size=n_trials):
        labels = _optimize(adj, strength, total, np.random.default_rng(int(trial_seed)))
        # zero-strength nodes carry no flow; keep them as singletons
        labels = [lab if strength[u] > 0 else n + u for u, lab in enumerate(labels)]
        candidates.append(_canonical(labels))

    scored = sorted((_codelength_labels(adj, c), c) for c in set(candidates))
    best_len = scored[0][0]
    best = min(c for length, c in scored if length <= best_len + 1e-12)
    return Partition.from_labels(g.nodes, best)
