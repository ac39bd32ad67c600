import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Compile the numba kernels once so timings elsewhere stay honest."""
    from carmi import build_index

    keys = np.unique(np.random.default_rng(0).uniform(0, 1e8, 2000))
    build_index(keys, keys)


def uniform_keys(n, seed=0, top=1e8):
    rng = np.random.default_rng(seed)
    return np.unique(rng.uniform(0.0, top, n))
