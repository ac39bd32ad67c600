"""Synthetic dataset generators and the binary dataset file format.

All synthetic keys are rescaled into [0, 1e8], deduplicated, and sorted;
values equal keys.  The file format is bit-exact: magic ``CARMIDAT``, a
little-endian u64 record count, then (f64 key, f64 value) records.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..core import DATASET_MAGIC, CarmiError

RESCALE_TOP = 1e8

DISTRIBUTIONS = ("uniform", "normal", "lognormal", "exponential", "ycsb_sequential", "file")


@dataclass
class DatasetSpec:
    distribution: str = "uniform"
    n: int = 1 << 22
    seed: int = 0
    path: str | None = None  # for distribution == 'file'

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise CarmiError(f"unknown distribution {self.distribution!r}")
        if self.distribution != "file" and self.n < 1:
            raise CarmiError("dataset size must be >= 1")


def draw_raw(spec: DatasetSpec) -> np.ndarray:
    """Raw draws before rescaling (exposed so tests can check moments)."""
    rng = np.random.default_rng(spec.seed)
    if spec.distribution == "uniform":
        return rng.uniform(0.0, 1.0, spec.n)
    if spec.distribution == "normal":
        return rng.normal(0.0, 1.0, spec.n)
    if spec.distribution == "lognormal":
        return rng.lognormal(0.0, 1.0, spec.n)
    if spec.distribution == "exponential":
        return rng.exponential(4.0, spec.n)  # Exp(0.25): mean 1/rate = 4
    raise CarmiError(f"{spec.distribution} has no random draw")


def rescale(raw: np.ndarray) -> np.ndarray:
    lo = raw.min()
    hi = raw.max()
    if hi <= lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo) * RESCALE_TOP


def gen_dataset(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sorted, deduplicated (key, value) arrays for the spec."""
    if spec.distribution == "file":
        return read_dataset(spec.path)
    if spec.distribution == "ycsb_sequential":
        keys = np.arange(spec.n, dtype=float) * (RESCALE_TOP / spec.n)
    else:
        keys = np.unique(rescale(draw_raw(spec)))
    return keys, keys.copy()


def write_dataset(path, keys: np.ndarray, values: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<Q", len(keys)))
        pairs = np.empty(2 * len(keys))
        pairs[0::2] = keys
        pairs[1::2] = values
        fh.write(pairs.astype("<f8").tobytes())


def read_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(8) != DATASET_MAGIC:
            raise CarmiError(f"{path}: bad dataset magic")
        (count,) = struct.unpack("<Q", fh.read(8))
        raw = np.frombuffer(fh.read(16 * count), dtype="<f8")
        if len(raw) != 2 * count:
            raise CarmiError(f"{path}: truncated dataset")
        return raw[0::2].copy(), raw[1::2].copy()
