"""Fixed-structure learned-index baselines built from the same machinery.

``build_fixed_rmi`` is a static two-layer structure: one linear-regression
root over plain array leaves, no cost-based selection (leaves simply grow
on insert).  ``build_fixed_alex`` keeps the adaptive construction but
restricts it to linear-regression inner nodes over gapped leaves.
"""

from __future__ import annotations

import numpy as np

from ..construct import BuildConfig, TrainingWorkload, build_index, default_training_workload
from ..index import Index


def build_fixed_rmi(keys, values, fanout: int | None = None, lam: float = 1e-7) -> Index:
    """Static LR root + one layer of array leaves (RMI-style)."""
    n = len(keys)
    if fanout is None:
        fanout = max(n // 1024, 1)
    big = max(n + 1, 8192)
    config = BuildConfig(
        lam=lam,
        algorithm_threshold=big,
        leaf_threshold=big,      # every root branch becomes a leaf directly
        max_capacity=big,        # skew may pile more than 4096 keys on a leaf
        root_variants=("lr",),
        root_fanout=fanout,
        leaf_kinds=("array",),
    )
    index, _ = build_index(keys, values, default_training_workload(np.asarray(keys)),
                           config)
    return index


def build_fixed_alex(keys, values, training: TrainingWorkload | None = None,
                     lam: float = 1e-7) -> Index:
    """Adaptive structure restricted to LR inner nodes and gapped leaves."""
    config = BuildConfig(
        lam=lam,
        inner_kinds=("lr",),
        root_variants=("lr",),
        leaf_kinds=("gapped",),
    )
    index, _ = build_index(keys, values, training, config)
    return index
