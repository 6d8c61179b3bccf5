"""Agglomerative clustering (single / average / complete) with threshold cuts.

Linkage runs the nearest-neighbour-chain algorithm on the condensed
triangle: O(N^2) time and one working copy of the triangle.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .partition import Partition
from .profiles import DissimilarityMatrix

METHODS = {"single": 0, "complete": 1, "average": 2, "weighted": 3}


class LinkageError(ValueError):
    pass


class Merge(NamedTuple):
    left: int
    right: int
    height: float
    size: int


@dataclass
class Dendrogram:
    """Merge tree over ``labels``.

    Node ids follow the usual convention: leaves are 0..n-1, merge k
    creates node n+k.
    """

    labels: list[str]
    merges: list[Merge]

    def __post_init__(self):
        n = len(self.labels)
        if n >= 1 and len(self.merges) != n - 1:
            raise LinkageError(f"{n} leaves need {n - 1} merges, got {len(self.merges)}")

    @property
    def n_leaves(self) -> int:
        return len(self.labels)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges], dtype=float)


@numba.njit(inline="always")
def _tri_index(i, j):
    if i < j:
        i, j = j, i
    return i * (i - 1) // 2 + j


@numba.njit(cache=True)
def _nn_chain(tri, n, method):
    d = tri.copy()
    size = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=np.bool_)
    out_a = np.empty(n - 1, dtype=np.int64)
    out_b = np.empty(n - 1, dtype=np.int64)
    out_h = np.empty(n - 1, dtype=np.float64)
    chain = np.empty(n, dtype=np.int64)
    top = 0
    n_merged = 0
    while n_merged < n - 1:
        if top == 0:
            for i in range(n):
                if active[i]:
                    chain[0] = i
                    top = 1
                    break
        while True:
            x = chain[top - 1]
            # the previous chain element wins ties; otherwise lowest slot
            if top >= 2:
                y = chain[top - 2]
                best_d = d[_tri_index(x, y)]
            else:
                y = -1
                best_d = np.inf
            best = y
            for k in range(n):
                if k == x or not active[k]:
                    continue
                dk = d[_tri_index(x, k)]
                if dk < best_d:
                    best_d = dk
                    best = k
            if top >= 2 and best == y:
                break
            chain[top] = best
            top += 1
        top -= 2
        lo = min(x, y)
        hi = max(x, y)
        out_a[n_merged] = lo
        out_b[n_merged] = hi
        out_h[n_merged] = best_d
        n_merged += 1
        s_lo = size[lo]
        s_hi = size[hi]
        for k in range(n):
            if not active[k] or k == lo or k == hi:
                continue
            d_lo = d[_tri_index(lo, k)]
            d_hi = d[_tri_index(hi, k)]
            if method == 0:
                new = min(d_lo, d_hi)
            elif method == 1:
                new = max(d_lo, d_hi)
            elif method == 2:
                new = (s_lo * d_lo + s_hi * d_hi) / (s_lo + s_hi)
            else:
                new = 0.5 * (d_lo + d_hi)
            d[_tri_index(lo, k)] = new
        active[hi] = False
        size[lo] = s_lo + s_hi
        # slot ids are min leaf ids, so any chain entry equal to hi is impossible
    return out_a, out_b, out_h


def _validate(matrix: DissimilarityMatrix) -> None:
    tri = np.asarray(matrix.tri)
    if tri.size and (not np.all(np.isfinite(tri)) or tri.min() < 0):
        raise LinkageError("dissimilarities must be finite and nonnegative")


def linkage(matrix: DissimilarityMatrix, method: str = "average") -> Dendrogram:
    """Agglomerate ``matrix`` with the given linkage.

    ``average`` is UPGMA; ``weighted`` (WPGMA) is available for comparison.
    Equal merge heights are ordered by the (min, max) representative leaf
    ids of the merging clusters.
    """
    if method not in METHODS:
        raise LinkageError(f"unknown linkage {method!r}; choose from {sorted(METHODS)}")
    n = matrix.n
    if n < 2:
        raise LinkageError("need at least two elements")
    _validate(matrix)
    a, b, h = _nn_chain(np.ascontiguousarray(matrix.tri, dtype=np.float64), n, METHODS[method])
    order = np.lexsort((b, a, h))
    parent = list(range(n))
    node_of = list(range(n))  # union-find root -> current tree node id
    sizes = [1] * n

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    merges: list[Merge] = []
    for k, idx in enumerate(order):
        ra, rb = find(int(a[idx])), find(int(b[idx]))
        na, nb = node_of[ra], node_of[rb]
        size = sizes[ra] + sizes[rb]
        merges.append(Merge(min(na, nb), max(na, nb), float(h[idx]), size))
        parent[rb] = ra
        sizes[ra] = size
        node_of[ra] = n + k
    heights = [m.height for m in merges]
    if any(y < x for x, y in zip(heights, heights[1:])):
        raise LinkageError("merge heights are not monotone")
    return Dendrogram(list(matrix.ids), merges)


def cut(tree: Dendrogram, threshold: float) -> Partition:
    """Flat partition from all merges strictly below ``threshold``.

    Leaves never joined below the threshold stay as singletons.
    """
    if threshold < 0:
        raise LinkageError("threshold must be nonnegative")
    n = tree.n_leaves
    parent = list(range(2 * n - 1)) if n else []

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, m in enumerate(tree.merges):
        if not m.height < threshold:
            break
        parent[find(m.left)] = n + k
        parent[find(m.right)] = n + k
    return Partition.from_labels(tree.labels, [find(i) for i in range(n)])


def leaf_sets(tree: Dendrogram) -> list[frozenset[int]]:
    """Leaf index set of every node id (leaves first, then merges)."""
    sets = [frozenset([i]) for i in range(tree.n_leaves)]
    for m in tree.merges:
        sets.append(sets[m.left] | sets[m.right])
    return sets


# ---- text export -------------------------------------------------------

_SAFE_LABEL = re.compile(r"^[^\s(),:;\[\]']+$")
_TOKEN = re.compile(r"'(?:[^']|'')*'|\[[^\]]*\]|[(),:;]|[^\s(),:;\[\]']+")


def _quote(label: str) -> str:
    if _SAFE_LABEL.match(label):
        return label
    return "'" + label.replace("'", "''") + "'"


def export_dendrogram(tree: Dendrogram) -> str:
    """Newick text with branch lengths.

    NHX comments carry each leaf's index and each internal node's merge
    index and exact height, so ``parse_dendrogram`` restores the tree
    exactly rather than re-summing rounded branch lengths.
    """
    n = tree.n_leaves
    if n == 1:
        return f"{_quote(tree.labels[0])}[&&NHX:leaf=0];"
    heights = [0.0] * n + [m.height for m in tree.merges]
    root = 2 * n - 2
    out: list[str] = []
    # explicit stack: single-linkage chains can be thousands of levels deep
    stack: list[tuple] = [("node", root, None)]
    while stack:
        kind, node, parent_h = stack.pop()
        if kind == "text":
            out.append(node)
            continue
        suffix = "" if parent_h is None else f":{parent_h - heights[node]!r}"
        if node < n:
            out.append(f"{_quote(tree.labels[node])}[&&NHX:leaf={node}]{suffix}")
            continue
        m = tree.merges[node - n]
        close = f")[&&NHX:merge={node - n}:height={m.height!r}]{suffix}"
        stack.append(("text", close, None))
        stack.append(("node", m.right, m.height))
        stack.append(("text", ",", None))
        stack.append(("node", m.left, m.height))
        out.append("(")
    return "".join(out) + ";"


def _nhx(token: str) -> dict[str, str]:
    fields = token[1:-1].split(":")
    if fields[0] != "&&NHX":
        return {}
    return dict(f.split("=", 1) for f in fields[1:] if "=" in f)


def parse_dendrogram(text: str) -> Dendrogram:
    tokens = _TOKEN.findall(text.strip())
    if not tokens or tokens[-1] != ";":
        raise LinkageError("dendrogram text must end with ';'")
    leaves: list[tuple[str, int | None]] = []
    internal: dict[int, tuple[float, list[int]]] = {}
    # each open group collects child refs: ("leaf", pos) or ("merge", index)
    groups: list[list[tuple[str, int]]] = []
    last: tuple[str, int] | None = None
    i = 0
    while i < len(tokens) - 1:
        tok = tokens[i]
        if tok == "(":
            groups.append([])
            last = None
        elif tok == ",":
            if not groups or last is None:
                raise LinkageError(f"unexpected ',' at token {i}")
            groups[-1].append(last)
            last = None
        elif tok == ")":
            if not groups or last is None:
                raise LinkageError(f"unexpected ')' at token {i}")
            kids = groups.pop() + [last]
            meta = _nhx(tokens[i + 1]) if tokens[i + 1].startswith("[") else {}
            if "merge" not in meta or "height" not in meta:
                raise LinkageError("internal node lacks merge/height annotation")
            if len(kids) != 2:
                raise LinkageError("dendrogram nodes must be binary")
            idx = int(meta["merge"])
            internal[idx] = (float(meta["height"]), kids)
            last = ("merge", idx)
        elif tok == ":":
            float(tokens[i + 1])
            i += 1
        elif tok.startswith("["):
            if last is not None and last[0] == "leaf" and "leaf" in _nhx(tok):
                name, _ = leaves[last[1]]
                leaves[last[1]] = (name, int(_nhx(tok)["leaf"]))
        else:
            name = tok[1:-1].replace("''", "'") if tok.startswith("'") else tok
            leaves.append((name, None))
            last = ("leaf", len(leaves) - 1)
        i += 1
    if groups or last is None:
        raise LinkageError("unbalanced parentheses")
    n = len(leaves)
    if all(slot is not None for _, slot in leaves):
        slots = [slot for _, slot in leaves]
    else:
        slots = list(range(n))
    if sorted(slots) != list(range(n)):
        raise LinkageError("leaf indices are not 0..n-1")
    if sorted(internal) != list(range(n - 1)):
        raise LinkageError("merge indices are not 0..n-2")
    labels = [""] * n
    for (name, _), slot in zip(leaves, slots):
        labels[slot] = name
    merges = []
    sizes = [1] * n
    for k in range(n - 1):
        height, kids = internal[k]
        a, b = sorted(slots[ref] if kind == "leaf" else n + ref for kind, ref in kids)
        sizes.append(sizes[a] + sizes[b])
        merges.append(Merge(a, b, height, sizes[-1]))
    return Dendrogram(labels, merges)
