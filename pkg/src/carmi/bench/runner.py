"""Measurement runner: build a structure, execute a query stream, report.

Each run builds the structure from the workload's build subset, warms it
with a short untimed read loop, then times the full interleaved stream with
a monotonic clock.  Query streams are a pure function of (spec, seed); the
stream hash in each result row makes cross-structure comparisons auditable.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from ..construct import BuildConfig, build_index, default_training_workload
from ..core import CarmiError, QueryKind
from ..index import Index
from .btree import BPlusTree
from .datasets import DatasetSpec, gen_dataset
from .fixed import build_fixed_alex, build_fixed_rmi
from .workloads import WRITE_PARTIAL_BAND, Workload, WorkloadSpec, gen_workload

STRUCTURES = ("carmi", "btree", "rmi", "alex")


@dataclass
class BenchResult:
    dataset: str
    workload: str
    access: str
    structure: str
    ops: int
    avg_ns_per_query: float
    space_bytes: float
    build_ms: float
    depth: int
    census: str
    stream_hash: str
    seed: int

    CSV_HEADER = ("dataset,workload,access,structure,ops,avg_ns_per_query,"
                  "space_bytes,build_ms,depth,census,stream_hash,seed")

    def csv_row(self) -> str:
        return (f"{self.dataset},{self.workload},{self.access},{self.structure},"
                f"{self.ops},{self.avg_ns_per_query:.1f},{self.space_bytes:.0f},"
                f"{self.build_ms:.1f},{self.depth},{self.census},"
                f"{self.stream_hash},{self.seed}")


def stream_hash(workload: Workload) -> str:
    h = hashlib.sha256()
    h.update(workload.kinds.tobytes())
    h.update(workload.keys.tobytes())
    h.update(workload.scan_lens.tobytes())
    return h.hexdigest()[:16]


def build_structure(name: str, workload: Workload, wspec: WorkloadSpec,
                    lam: float = 1e-7, config: BuildConfig | None = None,
                    seed: int = 0):
    """Build one of the comparable structures from a workload's build set."""
    keys, values = workload.build_keys, workload.build_values
    if name == "btree":
        return BPlusTree.bulk_from_sorted(keys, values)
    if name == "rmi":
        return build_fixed_rmi(keys, values, lam=lam)
    if name == "alex":
        training = _training_for(keys, wspec, seed)
        return build_fixed_alex(keys, values, training, lam=lam)
    if name == "carmi":
        if config is None:
            config = BuildConfig(lam=lam, external=wspec.sequential_inserts)
        training = _training_for(keys, wspec, seed)
        index, _ = build_index(keys, values, training, config)
        return index
    raise CarmiError(f"unknown structure {name!r}")


def _training_for(keys, wspec: WorkloadSpec, seed: int):
    """Cold-start training workload matching the target mix's read ratio."""
    region = None
    if wspec.mix == "write_partial":
        n = len(keys)
        region = (keys[int(WRITE_PARTIAL_BAND[0] * n)],
                  keys[min(int(WRITE_PARTIAL_BAND[1] * n), n - 1)])
    return default_training_workload(keys, wspec.read_ratio, region, seed)


def execute(structure, workload: Workload, warmup: int = 1000) -> tuple[float, int]:
    """Run the stream; returns (elapsed_ns, failed_query_count)."""
    kinds = workload.kinds.tolist()
    keys = workload.keys.tolist()
    values = workload.values.tolist()
    lens = workload.scan_lens.tolist()
    find = structure.find
    insert = structure.insert
    scan = structure.range_scan
    bk = workload.build_keys
    warm_idx = range(0, len(bk), max(len(bk) // max(warmup, 1), 1))
    for i in warm_idx:
        find(float(bk[i]))
    failed = 0
    read, ins, scn = int(QueryKind.READ), int(QueryKind.INSERT), int(QueryKind.SCAN)
    t0 = time.perf_counter_ns()
    for i, kind in enumerate(kinds):
        if kind == read:
            try:
                find(keys[i])
            except KeyError:
                failed += 1
        elif kind == ins:
            insert(keys[i], values[i])
        elif kind == scn:
            scan(keys[i], lens[i])
    elapsed = time.perf_counter_ns() - t0
    return elapsed, failed


def run(dspec: DatasetSpec, wspec: WorkloadSpec, structure: str,
        lam: float = 1e-7, config: BuildConfig | None = None) -> BenchResult:
    keys, values = gen_dataset(dspec)
    if dspec.distribution == "ycsb_sequential":
        wspec.sequential_inserts = True
    workload = gen_workload(wspec, keys, values)
    t0 = time.perf_counter()
    built = build_structure(structure, workload, wspec, lam, config, wspec.seed)
    build_ms = (time.perf_counter() - t0) * 1e3
    elapsed_ns, failed = execute(built, workload)
    if failed:
        raise CarmiError(f"{failed} read queries missed keys that were stored")
    return BenchResult(
        dataset=dspec.distribution,
        workload=wspec.mix,
        access=wspec.access,
        structure=structure,
        ops=wspec.ops,
        avg_ns_per_query=elapsed_ns / wspec.ops,
        space_bytes=_space(built),
        build_ms=build_ms,
        depth=_depth(built),
        census=_census(built),
        stream_hash=stream_hash(workload),
        seed=wspec.seed,
    )


def _space(built) -> float:
    if isinstance(built, Index):
        return float(built.stats().space_bytes)
    return built.space_bytes()


def _depth(built) -> int:
    if isinstance(built, Index):
        return built.stats().depth
    return built.depth()


def _census(built) -> str:
    if isinstance(built, Index):
        st = built.stats()
        return (f"lr:{st.lr_inner} plr:{st.plr_inner} his:{st.his_inner} "
                f"bs:{st.bs_inner} arr:{st.array_leaf} gap:{st.gapped_leaf} "
                f"ext:{st.external_leaf}")
    return f"btree_nodes:{built.n_nodes}"
