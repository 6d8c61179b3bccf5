"""Small weighted graphs (<= 10 nodes) with exhaustively known optima."""

from itertools import combinations

import numpy as np


def clique(nodes):
    return [(u, v, 1.0) for u, v in combinations(nodes, 2)]


def two_clique_bridge():
    return 10, clique(range(5)) + clique(range(5, 10)) + [(4, 5, 1.0)]


def ring(n=10):
    return n, [(k, (k + 1) % n, 1.0) for k in range(n)]


def star(n=9):
    return n, [(0, k, 1.0) for k in range(1, n)]


def weighted_ring_of_triangles():
    edges = clique([0, 1, 2]) + clique([3, 4, 5]) + clique([6, 7, 8])
    edges += [(2, 3, 1.0), (5, 6, 1.0), (8, 0, 1.0)]
    return 9, [(u, v, w * 3.0 if (u // 3) == (v // 3) else w) for u, v, w in edges]


def random_graph(seed, n=None, p=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(4, 11))
    p = p if p is not None else float(rng.uniform(0.2, 0.7))
    edges = [(u, v, float(rng.integers(1, 10))) for u, v in combinations(range(n), 2) if rng.random() < p]
    return n, edges


def fixtures():
    out = {
        "two_clique_bridge": two_clique_bridge(),
        "single_clique": (6, clique(range(6))),
        "ring10": ring(10),
        "ring6": ring(6),
        "star9": star(9),
        "triangle_ring": weighted_ring_of_triangles(),
        "two_components": (8, clique(range(4)) + clique(range(4, 8))),
    }
    for seed in range(12):
        out[f"random{seed}"] = random_graph(seed)
    return out
