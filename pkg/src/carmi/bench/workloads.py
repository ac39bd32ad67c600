"""Query workload generation: five mixes, Zipfian/uniform access.

Reads and inserts interleave in exact proportion (a read-heavy stream is 19
reads then 1 insert, repeated).  Insert keys are held out of the build set
ahead of time; the write-partial mix samples them from the 60-90% quantile
band, and sequential mode (YCSB-style) appends strictly increasing keys
beyond the current maximum instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import CarmiError, QueryKind, Query

MIXES = ("write_heavy", "read_heavy", "read_only", "write_partial", "range_scan")
ACCESS = ("zipfian", "uniform")

# (reads, inserts, scans) per interleaving cycle
_MIX_CYCLE = {
    "write_heavy": (1, 1, 0),
    "read_heavy": (19, 1, 0),
    "read_only": (1, 0, 0),
    "write_partial": (17, 3, 0),
    "range_scan": (0, 1, 19),
}

SCAN_LEN_MAX = 100
WRITE_PARTIAL_BAND = (0.60, 0.90)


@dataclass
class WorkloadSpec:
    mix: str = "read_only"
    access: str = "zipfian"
    ops: int = 100_000
    seed: int = 0
    zipf_s: float = 0.99
    sequential_inserts: bool = False  # YCSB datasets: append beyond the max key

    def __post_init__(self):
        if self.mix not in MIXES:
            raise CarmiError(f"unknown workload mix {self.mix!r}")
        if self.access not in ACCESS:
            raise CarmiError(f"unknown access pattern {self.access!r}")
        if self.ops < 1:
            raise CarmiError("ops must be >= 1")

    @property
    def read_ratio(self) -> float:
        r, i, s = _MIX_CYCLE[self.mix]
        return (r + s) / (r + i + s)


class ZipfianSampler:
    """Exact Zipf(N, s) ranks in [1, N] via rejection inversion.

    Standard Hoermann/Derflinger scheme (as used by YCSB); supports s < 1.
    """

    def __init__(self, n: int, s: float, rng: np.random.Generator):
        if n < 1:
            raise CarmiError("zipf needs n >= 1")
        self.n = n
        self.s = s
        self.rng = rng
        self._h_x1 = self._h_integral(1.5) - 1.0
        self._h_n = self._h_integral(n + 0.5)
        self._thresh = 2.0 - self._h_integral_inverse(self._h_integral(2.5) - self._h(2.0))

    def _h(self, x: float) -> float:
        return math.exp(-self.s * math.log(x))

    def _h_integral(self, x: float) -> float:
        log_x = math.log(x)
        return _helper2((1.0 - self.s) * log_x) * log_x

    def _h_integral_inverse(self, x: float) -> float:
        t = x * (1.0 - self.s)
        if t < -1.0:
            t = -1.0
        return math.exp(_helper1(t) * x)

    def sample(self) -> int:
        while True:
            u = self._h_n + self.rng.random() * (self._h_x1 - self._h_n)
            x = self._h_integral_inverse(u)
            k = int(x + 0.5)
            if k < 1:
                k = 1
            elif k > self.n:
                k = self.n
            if k - x <= self._thresh or u >= self._h_integral(k + 0.5) - self._h(k):
                return k

    def sample_many(self, count: int) -> np.ndarray:
        return np.fromiter((self.sample() for _ in range(count)), np.int64, count)


def _helper1(x: float) -> float:
    if abs(x) > 1e-8:
        return math.log1p(x) / x
    return 1.0 - x * (0.5 - x * (1.0 / 3.0 - 0.25 * x))


def _helper2(x: float) -> float:
    if abs(x) > 1e-8:
        return math.expm1(x) / x
    return 1.0 + x * 0.5 * (1.0 + x / 3.0 * (1.0 + 0.25 * x))


@dataclass
class Workload:
    """Build subset plus the exact interleaved query stream (struct of arrays)."""

    build_keys: np.ndarray
    build_values: np.ndarray
    kinds: np.ndarray    # int8 QueryKind values
    keys: np.ndarray     # query key per op
    values: np.ndarray   # insert value per op (0 otherwise)
    scan_lens: np.ndarray

    def queries(self):
        for i in range(len(self.kinds)):
            yield Query(QueryKind(int(self.kinds[i])), float(self.keys[i]),
                        float(self.values[i]), int(self.scan_lens[i]))

    def counts(self) -> dict:
        kinds, counts = np.unique(self.kinds, return_counts=True)
        return {QueryKind(int(k)).name.lower(): int(c) for k, c in zip(kinds, counts)}


def _access_indices(spec: WorkloadSpec, n: int, count: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Key indices for reads/scans; Zipf ranks map through a fixed permutation
    so popularity is spread across the key space."""
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if spec.access == "uniform":
        return rng.integers(0, n, size=count)
    ranks = ZipfianSampler(n, spec.zipf_s, rng).sample_many(count) - 1
    perm = np.random.default_rng(spec.seed ^ 0x5EED).permutation(n)
    return perm[ranks]


def gen_workload(spec: WorkloadSpec, keys: np.ndarray,
                 values: np.ndarray | None = None) -> Workload:
    """Split the dataset into build set + held-out inserts and emit the stream."""
    keys = np.asarray(keys, dtype=float)
    if values is None:
        values = keys
    n = len(keys)
    if n < 2:
        raise CarmiError("workload generation needs at least two keys")
    r, i, s = _MIX_CYCLE[spec.mix]
    cycle = r + i + s
    ops = spec.ops
    full, rem = divmod(ops, cycle)
    pattern = [QueryKind.READ] * r + [QueryKind.INSERT] * i + [QueryKind.SCAN] * s
    if spec.mix == "range_scan":  # scans lead, one insert closes the cycle
        pattern = [QueryKind.SCAN] * s + [QueryKind.INSERT] * i
    kinds = np.asarray(pattern * full + pattern[:rem], dtype=np.int8)
    n_inserts = int(np.count_nonzero(kinds == QueryKind.INSERT))
    rng = np.random.default_rng(spec.seed)

    if spec.sequential_inserts or n_inserts == 0:
        build_keys, build_values = keys, values
        step = (keys[-1] - keys[0]) / n if n > 1 and keys[-1] > keys[0] else 1.0
        insert_keys = keys[-1] + step * np.arange(1, n_inserts + 1)
    else:
        if spec.mix == "write_partial":
            lo = int(WRITE_PARTIAL_BAND[0] * n)
            hi = max(int(WRITE_PARTIAL_BAND[1] * n), lo + 1)
        else:
            lo, hi = 0, n
        if n_inserts > (hi - lo) // 2:
            raise CarmiError(
                f"{n_inserts} inserts need more held-out keys than the "
                f"dataset can spare; lower --ops or enlarge the dataset")
        held = rng.choice(np.arange(lo, hi), size=n_inserts, replace=False)
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        build_keys = keys[mask]
        build_values = values[mask]
        insert_keys = keys[~mask][rng.permutation(n_inserts)]

    nb = len(build_keys)
    qkeys = np.empty(ops)
    qvals = np.zeros(ops)
    qlens = np.ones(ops, dtype=np.int32)
    n_point = int(np.count_nonzero(kinds == QueryKind.READ))
    n_scan = int(np.count_nonzero(kinds == QueryKind.SCAN))

    read_idx = _access_indices(spec, nb, n_point, rng)
    scan_idx = _access_indices(spec, nb, n_scan, rng)
    qkeys[kinds == QueryKind.READ] = build_keys[read_idx]
    qkeys[kinds == QueryKind.SCAN] = build_keys[scan_idx]
    qlens[kinds == QueryKind.SCAN] = rng.integers(1, SCAN_LEN_MAX + 1, size=n_scan)
    ins_mask = kinds == QueryKind.INSERT
    qkeys[ins_mask] = insert_keys[: int(np.count_nonzero(ins_mask))]
    qvals[ins_mask] = qkeys[ins_mask]
    return Workload(build_keys, build_values, kinds, qkeys, qvals, qlens)
