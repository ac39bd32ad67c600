"""CARMI: an in-memory cache-aware learned index with cost-based construction.

The library builds a recursive model index whose tree nodes are fixed
64-byte records (one cache line).  Inner nodes hold one of four
order-preserving branch predictors; leaf nodes own contiguous ranges of a
shared data array and locate entries with a small linear model plus a
bounded binary search.  Construction minimizes a time/space objective over
a training workload, switching between exact dynamic programming and a
greedy entropy score depending on range size.

Typical use::

    import numpy as np
    from carmi import build_index

    keys = np.sort(np.random.default_rng(0).uniform(0, 1e8, 100_000))
    index, cost = build_index(keys, keys)
    index.find(keys[42])
"""

from .core import (
    CarmiError,
    NotFound,
    DuplicateKey,
    NonFiniteKey,
    Entry,
    Query,
    QueryKind,
    NodeRecord,
    NodeType,
    encode_node,
    decode_node,
)
from .cost import CostConstants, CostBreakdown, entropy, weighted_entropy_sum, tree_objective
from .construct import BuildConfig, TrainingWorkload, default_training_workload, build_index
from .index import Index, IndexStats

__all__ = [
    "CarmiError",
    "NotFound",
    "DuplicateKey",
    "NonFiniteKey",
    "Entry",
    "Query",
    "QueryKind",
    "NodeRecord",
    "NodeType",
    "encode_node",
    "decode_node",
    "CostConstants",
    "CostBreakdown",
    "entropy",
    "weighted_entropy_sum",
    "tree_objective",
    "BuildConfig",
    "TrainingWorkload",
    "default_training_workload",
    "build_index",
    "Index",
    "IndexStats",
]

__version__ = "0.1.0"
