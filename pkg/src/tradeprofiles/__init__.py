"""Investor clusters from daily trading-state profiles.

Two routes to the same question: a hierarchical clustering of Jaccard
dissimilarities between buy/sell/buy-sell profiles, and a statistically
validated co-trading network partitioned with the map equation. The
threshold sweep in :mod:`tradeprofiles.compare` aligns the two.
"""

from .compare import adjusted_rand_index, ari_sweep
from .community import infomap_partition
from .encoder import TradingState, build_state_series, compute_state, filter_active
from .hclust import cut, linkage
from .partition import Partition
from .profiles import build_profile_vector, dissimilarity_matrix, jaccard
from .svn import build_svn, hypergeom_pvalue

__all__ = [
    "Partition",
    "TradingState",
    "adjusted_rand_index",
    "ari_sweep",
    "build_profile_vector",
    "build_state_series",
    "build_svn",
    "compute_state",
    "cut",
    "dissimilarity_matrix",
    "filter_active",
    "hypergeom_pvalue",
    "infomap_partition",
    "jaccard",
    "linkage",
]
__version__ = "0.1.0"
