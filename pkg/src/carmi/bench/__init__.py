"""Benchmark harness: datasets, workloads, baselines, and the runner."""

from .datasets import DatasetSpec, gen_dataset, read_dataset, write_dataset
from .workloads import WorkloadSpec, Workload, ZipfianSampler, gen_workload
from .btree import BPlusTree
from .fixed import build_fixed_alex, build_fixed_rmi
from .runner import BenchResult, build_structure, run, STRUCTURES

__all__ = [
    "DatasetSpec",
    "gen_dataset",
    "read_dataset",
    "write_dataset",
    "WorkloadSpec",
    "Workload",
    "ZipfianSampler",
    "gen_workload",
    "BPlusTree",
    "build_fixed_rmi",
    "build_fixed_alex",
    "BenchResult",
    "build_structure",
    "run",
    "STRUCTURES",
]
