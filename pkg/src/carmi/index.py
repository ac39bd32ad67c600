"""Public index facade: lookups, mutation, scans, and structure statistics.

A served index is the trained root, a flat list of typed nodes (the
64-byte-record array in object form), the shared data array, and a
leaf-order table that keeps range scans correct once node splits break the
physical adjacency of leaf blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .core import (
    AtMaxCapacity,
    CarmiError,
    LeafFull,
    NodeRecord,
    NodeType,
    NonFiniteKey,
    NotFound,
    encode_node,
    write_snapshot,
)
from .cost import index_space_bytes, weighted_entropy_sum
from .leaf import (
    _locate_gapped,
    array_insert,
    bisect_left,
    collect_range,
    expand_array,
    expand_gapped,
    external_find,
    external_insert,
    gapped_insert,
    leaf_delete,
    leaf_find,
)

_TYPE_FIELD = {
    NodeType.LR_INNER: "lr_inner",
    NodeType.PLR_INNER: "plr_inner",
    NodeType.HIS_INNER: "his_inner",
    NodeType.BS_INNER: "bs_inner",
    NodeType.ARRAY_LEAF: "array_leaf",
    NodeType.GAPPED_LEAF: "gapped_leaf",
    NodeType.EXTERNAL_LEAF: "external_leaf",
}

_ROOT_FIELD = {"lr": "lr_inner", "plr": "plr_inner", "his": "his_inner", "bs": "bs_inner"}


@dataclass
class IndexStats:
    """Node census (root counted under its variant), depth, space, entropy sum."""

    lr_inner: int = 0
    plr_inner: int = 0
    his_inner: int = 0
    bs_inner: int = 0
    array_leaf: int = 0
    gapped_leaf: int = 0
    external_leaf: int = 0
    depth: int = 0
    space_bytes: float = 0.0
    weighted_entropy: float = 0.0
    n_live: int = 0

    CSV_HEADER = ("lr,plr,his,bs,array,gapped,external,depth,"
                  "space_bytes,weighted_entropy,n_live")

    def csv_row(self) -> str:
        return (f"{self.lr_inner},{self.plr_inner},{self.his_inner},{self.bs_inner},"
                f"{self.array_leaf},{self.gapped_leaf},{self.external_leaf},"
                f"{self.depth},{self.space_bytes:.1f},"
                f"{self.weighted_entropy:.9f},{self.n_live}")


class Index:
    """A servable index.  Single writer; any number of readers when frozen."""

    root_start = 0  # root children always occupy the first node slots

    def __init__(self, root, nodes, data, leaf_order, config, n_live, external=None):
        self.root = root
        self.nodes = nodes
        self.data = data
        self.leaf_order = leaf_order
        self.config = config
        self.n_live = n_live
        self.external = external
        self._leaf_pos = {slot: i for i, slot in enumerate(leaf_order)}

    # -- traversal ----------------------------------------------------------

    def _descend(self, key: float):
        nodes = self.nodes
        idx = self.root.predict(key)
        node = nodes[idx]
        while node.is_inner:
            idx = node.start + node.predict(key)
            node = nodes[idx]
        return idx, node

    # -- point operations -----------------------------------------------------

    def find(self, key: float) -> float:
        # Hot path: the dense-leaf search is inlined and reads one packed
        # tuple per leaf (interpreter dispatch dominates lookup latency).
        if self.external is not None:
            _, leaf = self._descend(key)
            s = external_find(leaf, self.external, key)
            return self.external.values[s]
        nodes = self.nodes
        node = nodes[self.root.predict(key)]
        while node.is_inner:
            node = nodes[node.start + node.predict(key)]
        dense, anchor, slope, intercept, w, lo, hi, tombs = node.hot
        if hi < lo:
            raise NotFound(key)
        data = self.data
        if dense:
            keys = data.keys
            p = int(slope * (key - anchor) + intercept) + lo
            if p < lo:
                p = lo
            elif p > hi:
                p = hi
            wlo = p - w
            whi = p + w
            if wlo < lo:
                wlo = lo
            if whi > hi:
                whi = hi
            i = bisect_left(keys, key, wlo, whi + 1)
            if i > whi or keys[i] != key:
                i = bisect_left(keys, key, lo, hi + 1)
                if i > hi or keys[i] != key:
                    raise NotFound(key)
            if tombs and data.dead[i]:
                raise NotFound(key)
            return data.values[i]
        s = _locate_gapped(node, data.keys, key) if node.size else -1
        if s < 0 or data.dead[s]:
            raise NotFound(key)
        return data.values[s]

    def insert(self, key: float, value: float) -> int:
        """Insert a new (or tombstoned) key; returns entries moved."""
        if not math.isfinite(key):
            raise NonFiniteKey(key)
        if self.external is not None:
            return self._external_insert(key, value)
        cfg = self.config
        for _ in range(8):  # retries after expansion/split
            slot, leaf = self._descend(key)
            if leaf.kind == NodeType.GAPPED_LEAF:
                if leaf.size >= leaf.capacity * cfg.density_upper or \
                        leaf.size >= leaf.capacity:
                    try:
                        expand_gapped(leaf, self.data, cfg.max_capacity)
                    except AtMaxCapacity:
                        # at the capacity cap: fill remaining gaps, split only
                        # once the block is truly packed
                        if leaf.size >= leaf.capacity:
                            self._split(slot)
                            continue
                moves = gapped_insert(leaf, self.data, key, value)
            else:
                try:
                    moves = array_insert(leaf, self.data, key, value)
                except LeafFull:
                    try:
                        expand_array(leaf, self.data, cfg.max_capacity)
                    except AtMaxCapacity:
                        self._split(slot)
                        continue
                    moves = array_insert(leaf, self.data, key, value)
            self.n_live += 1
            return moves
        raise CarmiError("insert did not settle after repeated splits")

    def _external_insert(self, key: float, value: float) -> int:
        slot = self.leaf_order[-1]
        leaf = self.nodes[slot]
        external_insert(leaf, self.external, key, value)
        self.n_live += 1
        if leaf.size > self.config.max_capacity:
            self._split(slot)
        return 0

    def update(self, key: float, value: float) -> None:
        _, leaf = self._descend(key)
        if leaf.kind == NodeType.EXTERNAL_LEAF:
            s = external_find(leaf, self.external, key)
            self.external.values[s] = value
        else:
            s = leaf_find(leaf, self.data, key)
            self.data.values[s] = value

    def delete(self, key: float) -> None:
        _, leaf = self._descend(key)
        if leaf.kind == NodeType.EXTERNAL_LEAF:
            s = external_find(leaf, self.external, key)
            self.external.dead[s] = True
        else:
            leaf_delete(leaf, self.data, key)
        self.n_live -= 1

    def range_scan(self, start_key: float, length: int) -> list[tuple[float, float]]:
        """Up to ``length`` smallest live entries with key >= start_key."""
        if length < 1:
            raise CarmiError("scan length must be >= 1")
        out: list[tuple[float, float]] = []
        slot, _ = self._descend(start_key)
        i = self._leaf_pos[slot]
        need = length
        while need > 0 and i < len(self.leaf_order):
            leaf = self.nodes[self.leaf_order[i]]
            storage = self.external if leaf.kind == NodeType.EXTERNAL_LEAF else self.data
            need = collect_range(leaf, storage, start_key, out, need)
            i += 1
        return out

    def _split(self, slot: int) -> None:
        from .construct import split_leaf  # deferred: construct imports this module

        split_leaf(self, slot)

    # -- structure accounting --------------------------------------------------

    def leaf_live_count(self, leaf) -> int:
        if leaf.kind == NodeType.EXTERNAL_LEAF:
            sl = slice(leaf.start, leaf.start + leaf.size)
            return leaf.size - self.external.dead[sl].count(True)
        sl = slice(leaf.start, leaf.start + leaf.capacity)
        ks = np.asarray(self.data.keys[sl])
        dd = np.asarray(self.data.dead[sl], dtype=bool)
        return int(np.count_nonzero((ks == ks) & ~dd))

    def leaf_position(self, slot: int) -> int:
        return self._leaf_pos[slot]

    def replace_leaf_order(self, pos: int, new_slots: list[int]) -> None:
        self.leaf_order[pos : pos + 1] = new_slots
        self._leaf_pos = {slot: i for i, slot in enumerate(self.leaf_order)}

    def stats(self) -> IndexStats:
        st = IndexStats()
        setattr(st, _ROOT_FIELD[self.root.variant], 1)
        for node in self.nodes:
            name = _TYPE_FIELD[node.kind]
            setattr(st, name, getattr(st, name) + 1)
        st.depth = self._max_depth()
        st.space_bytes = index_space_bytes(self, self.config.constants)
        st.weighted_entropy = weighted_entropy_sum(self)
        st.n_live = self.n_live
        return st

    def _max_depth(self) -> int:
        depth = 1  # the root level
        stack = [(j, 2) for j in range(self.root.c)]
        while stack:
            slot, d = stack.pop()
            node = self.nodes[slot]
            if d > depth:
                depth = d
            if node.is_inner:
                stack.extend((node.start + j, d + 1) for j in range(node.c))
        return depth

    def records(self) -> list[NodeRecord]:
        out = []
        for node in self.nodes:
            if node.is_inner:
                out.append(NodeRecord(node.kind, node.c, node.start,
                                      node.params_bytes()))
            else:
                count = node.size if node.kind == NodeType.EXTERNAL_LEAF else node.capacity
                out.append(NodeRecord(node.kind, count, node.start,
                                      node.params_bytes()))
        return out

    def encoded_nodes(self) -> bytes:
        return b"".join(encode_node(r) for r in self.records())

    def snapshot(self, path) -> None:
        n = self.data.length
        write_snapshot(path, self.records(), self.data.keys[:n], self.data.values[:n])

    def validate(self) -> None:
        """Reachability (every slot visited exactly once) and record sizes."""
        seen = [False] * len(self.nodes)
        stack = list(range(self.root.c))
        while stack:
            slot = stack.pop()
            if seen[slot]:
                raise CarmiError(f"node {slot} reachable twice")
            seen[slot] = True
            node = self.nodes[slot]
            if node.is_inner:
                stack.extend(range(node.start, node.start + node.c))
        if not all(seen):
            raise CarmiError("unreachable node records")
        for rec in self.records():
            if len(encode_node(rec)) != 64:
                raise CarmiError("record does not encode to 64 bytes")
        for node in self.nodes:
            if not node.is_inner:
                fresh = node.hot
                node.refresh_hot()
                if node.hot != fresh:
                    raise CarmiError("stale packed lookup tuple on a leaf")
