"""Storage substrate: 64-byte node records, the node/data arrays, and queries.

Every tree node below the root is stored as a fixed 64-byte record so that
one node fits one cache line.  The byte layout is::

    byte 0       node type tag
    bytes 1-3    count, little-endian 24-bit (children for inner nodes,
                 data slots for leaves)
    bytes 4-7    start offset, little-endian 32-bit (into the node array
                 for inner nodes, into the data array for leaves, into the
                 external record array for external leaves)
    bytes 8-63   model parameter block (56 bytes, type-specific)

Key/value entries live in a single flat data array; a NaN key marks a gap
slot (user keys must be finite), and a separate flag marks tombstones,
which keep their key so binary search over a leaf stays well-defined.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

NODE_BYTES = 64
PARAMS_BYTES = 56
MAX_COUNT = (1 << 24) - 1

SNAPSHOT_MAGIC = b"CARMIIDX"
DATASET_MAGIC = b"CARMIDAT"


class CarmiError(Exception):
    """Base class for all library errors."""


class CountOverflow(CarmiError):
    """Node count does not fit the 24-bit record field."""


class UnknownTag(CarmiError):
    """Record block carries an unrecognized node type byte."""


class NotFound(CarmiError, KeyError):
    """Key absent (or tombstoned)."""


class DuplicateKey(CarmiError):
    """Insert of a key that is already live."""


class NonFiniteKey(CarmiError):
    """NaN/inf key; NaN is reserved as the gap sentinel."""


class EmptyInput(CarmiError):
    """Operation requires at least one key/residual."""


class FanoutTooLarge(CarmiError):
    """Requested fanout exceeds what the node encoding can hold."""


class CapacityExceeded(CarmiError):
    """More entries than the leaf capacity allows."""


class LeafFull(CarmiError):
    """Array leaf has no free slot; caller must expand or split."""


class AtMaxCapacity(CarmiError):
    """Leaf already at the capacity cap; caller must split."""


class OutOfOrderInsert(CarmiError):
    """External-array insert key not greater than the current maximum."""


class DegenerateDensity(CarmiError):
    """Gapped-leaf cost asked for with zero gap density."""


class ZeroEntropy(CarmiError):
    """Candidate partition puts every key in one branch."""


class NoViableCandidate(CarmiError):
    """Every inner-node candidate was degenerate."""


class TooLarge(CarmiError):
    """Key range too large for a single leaf."""


class NodeType(IntEnum):
    LR_INNER = 1
    PLR_INNER = 2
    HIS_INNER = 3
    BS_INNER = 4
    ARRAY_LEAF = 5
    GAPPED_LEAF = 6
    EXTERNAL_LEAF = 7


LEAF_TYPES = (NodeType.ARRAY_LEAF, NodeType.GAPPED_LEAF, NodeType.EXTERNAL_LEAF)


class QueryKind(IntEnum):
    READ = 0
    INSERT = 1
    UPDATE = 2
    DELETE = 3
    SCAN = 4


@dataclass(frozen=True)
class Entry:
    key: float
    value: float


@dataclass(frozen=True)
class Query:
    kind: QueryKind
    key: float
    value: float = 0.0
    scan_len: int = 1


@dataclass(frozen=True)
class NodeRecord:
    """Decoded form of one 64-byte node record."""

    node_type: int
    count: int
    start: int
    params: bytes

    def __post_init__(self):
        if len(self.params) != PARAMS_BYTES:
            raise ValueError(f"params must be {PARAMS_BYTES} bytes, got {len(self.params)}")


_HEADER = struct.Struct("<BHBI")  # tag, count lo16, count hi8, start


def encode_node(record: NodeRecord) -> bytes:
    """Pack a record into its canonical 64-byte block."""
    if record.count >= (1 << 24):
        raise CountOverflow(f"count {record.count} exceeds 24-bit field")
    if record.count < 0 or record.start < 0 or record.start >= (1 << 32):
        raise CarmiError("count/start out of range")
    block = _HEADER.pack(
        int(record.node_type), record.count & 0xFFFF, record.count >> 16, record.start
    ) + record.params
    assert len(block) == NODE_BYTES
    return block


def decode_node(block: bytes) -> NodeRecord:
    """Inverse of :func:`encode_node`."""
    if len(block) != NODE_BYTES:
        raise CarmiError(f"node block must be {NODE_BYTES} bytes, got {len(block)}")
    tag, count_lo, count_hi, start = _HEADER.unpack_from(block)
    try:
        node_type = NodeType(tag)
    except ValueError:
        raise UnknownTag(f"unrecognized node type byte {tag}") from None
    return NodeRecord(node_type, count_lo | (count_hi << 16), start, bytes(block[8:]))


class NodeArray:
    """Bump-allocated sequence of node records.

    Children of an inner node always occupy one contiguous run of slots, so
    allocation is a simple length extension.
    """

    def __init__(self):
        self.records: list = []

    def __len__(self) -> int:
        return len(self.records)

    def allocate_children(self, c: int) -> int:
        if c < 1:
            raise CarmiError("must allocate at least one child slot")
        start = len(self.records)
        self.records.extend([None] * c)
        return start


def allocate_children(node_array: NodeArray, c: int) -> int:
    return node_array.allocate_children(c)


@dataclass(frozen=True)
class DataSlot:
    """Inspection view of one data-array slot."""

    state: str  # 'occupied' | 'gap' | 'tombstone'
    entry: Entry | None = None


_NAN = float("nan")


class DataArray:
    """Flat keyed storage; leaves own contiguous [start, start+count) ranges.

    Slots live in plain Python lists so leaf searches run on unboxed floats
    (this is also what the B+-tree baseline stores, keeping timing
    comparisons apples-to-apples).  Gaps are NaN-keyed slots.  Tombstones
    keep key and value but are flagged dead.  Freed blocks (from node
    splits) go on a free list and are reused first-fit; no compaction.
    """

    def __init__(self, initial_capacity: int = 0):
        self.keys: list[float] = []
        self.values: list[float] = []
        self.dead: list[bool] = []
        self.free_blocks: list[tuple[int, int]] = []  # (start, size)

    @property
    def length(self) -> int:
        return len(self.keys)

    def allocate(self, n_slots: int) -> int:
        if n_slots < 1:
            raise CarmiError("must allocate at least one data slot")
        for i, (start, size) in enumerate(self.free_blocks):
            if size >= n_slots:
                if size == n_slots:
                    self.free_blocks.pop(i)
                else:
                    self.free_blocks[i] = (start + n_slots, size - n_slots)
                self._clear(start, n_slots)
                return start
        start = len(self.keys)
        self.keys.extend([_NAN] * n_slots)
        self.values.extend([0.0] * n_slots)
        self.dead.extend([False] * n_slots)
        return start

    def free(self, start: int, n_slots: int):
        if n_slots > 0:
            self._clear(start, n_slots)
            self.free_blocks.append((start, n_slots))

    def _clear(self, start: int, n_slots: int):
        self.keys[start : start + n_slots] = [_NAN] * n_slots
        self.values[start : start + n_slots] = [0.0] * n_slots
        self.dead[start : start + n_slots] = [False] * n_slots

    def write_block(self, start: int, keys, values) -> None:
        """Bulk-write a leaf block; NaN entries in ``keys`` stay gaps."""
        n = len(keys)
        self.keys[start : start + n] = keys.tolist() if hasattr(keys, "tolist") else list(keys)
        self.values[start : start + n] = (
            values.tolist() if hasattr(values, "tolist") else list(values)
        )
        self.dead[start : start + n] = [False] * n

    def slot(self, i: int) -> DataSlot:
        k = self.keys[i]
        if k != k:
            return DataSlot("gap")
        entry = Entry(k, self.values[i])
        return DataSlot("tombstone" if self.dead[i] else "occupied", entry)


def allocate_data(data_array: DataArray, n_slots: int) -> int:
    return data_array.allocate(n_slots)


def check_finite_keys(keys: np.ndarray):
    if not np.all(np.isfinite(keys)):
        raise NonFiniteKey("keys must be finite; NaN is the gap sentinel")


def check_unique_sorted(keys: np.ndarray):
    if len(keys) > 1 and not np.all(np.diff(keys) > 0):
        raise DuplicateKey("keys must be strictly increasing (no duplicates)")


# ---------------------------------------------------------------------------
# Snapshot dump (debug format)
# ---------------------------------------------------------------------------

def write_snapshot(path, records: list[NodeRecord], keys: np.ndarray, values: np.ndarray):
    """Dump node records and data slots; gaps keep their NaN key.

    Tombstoned slots are dumped as plain entries (debug format; liveness
    flags are not part of the snapshot).
    """
    keys = np.asarray(keys, dtype=float)
    values = np.asarray(values, dtype=float)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<Q", len(records)))
        for rec in records:
            fh.write(encode_node(rec))
        fh.write(struct.pack("<Q", len(keys)))
        pairs = np.empty(2 * len(keys))
        pairs[0::2] = keys
        pairs[1::2] = values
        fh.write(pairs.astype("<f8").tobytes())


def read_snapshot(path) -> tuple[list[NodeRecord], np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(8) != SNAPSHOT_MAGIC:
            raise CarmiError("bad snapshot magic")
        (n_nodes,) = struct.unpack("<Q", fh.read(8))
        records = [decode_node(fh.read(NODE_BYTES)) for _ in range(n_nodes)]
        (n_slots,) = struct.unpack("<Q", fh.read(8))
        raw = np.frombuffer(fh.read(16 * n_slots), dtype="<f8")
        return records, raw[0::2].copy(), raw[1::2].copy()
