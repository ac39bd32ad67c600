"""In-repo B+-tree baseline with cache-line-sized nodes.

Node capacity is derived from a byte budget (256 bytes by default, the
typical STX node size: 16 entries of key + pointer/value).  Leaves are
chained for range scans.  Deletion removes entries without rebalancing;
lookups stay correct because separators never move, and the root collapses
when it has a single child.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right

from ..core import CarmiError, DuplicateKey, NotFound

DEFAULT_NODE_BYTES = 256


class _Leaf:
    __slots__ = ("keys", "vals", "nxt")

    def __init__(self):
        self.keys: list[float] = []
        self.vals: list[float] = []
        self.nxt: _Leaf | None = None


class _Inner:
    __slots__ = ("seps", "kids")

    def __init__(self, seps, kids):
        self.seps: list[float] = seps  # kids[j] holds keys < seps[j] (last kid: rest)
        self.kids: list = kids


class BPlusTree:
    """Sorted key/value map with the same operation contract as the index."""

    def __init__(self, node_bytes: int = DEFAULT_NODE_BYTES):
        self.order = max(node_bytes // 16, 4)  # entries per node
        self.root = _Leaf()
        self.n_nodes = 1
        self.n_live = 0
        self.node_bytes = node_bytes

    # -- construction ---------------------------------------------------------

    @classmethod
    def bulk_from_sorted(cls, keys, values, node_bytes: int = DEFAULT_NODE_BYTES,
                         fill: float = 0.75) -> "BPlusTree":
        tree = cls(node_bytes)
        n = len(keys)
        if n == 0:
            return tree
        chunk = max(int(tree.order * fill), 2)
        leaves = []
        for lo in range(0, n, chunk):
            leaf = _Leaf()
            leaf.keys = [float(k) for k in keys[lo : lo + chunk]]
            leaf.vals = [float(v) for v in values[lo : lo + chunk]]
            leaves.append(leaf)
        for a, b in zip(leaves, leaves[1:]):
            a.nxt = b
        tree.n_nodes = len(leaves)
        level = leaves
        firsts = [lf.keys[0] for lf in leaves]
        while len(level) > 1:
            parents = []
            parent_firsts = []
            for lo in range(0, len(level), chunk):
                kids = level[lo : lo + chunk]
                seps = firsts[lo + 1 : lo + len(kids)]
                parents.append(_Inner(list(seps), list(kids)))
                parent_firsts.append(firsts[lo])
            tree.n_nodes += len(parents)
            level = parents
            firsts = parent_firsts
        tree.root = level[0]
        tree.n_live = n
        return tree

    # -- point ops --------------------------------------------------------------

    def _leaf_for(self, key: float) -> _Leaf:
        node = self.root
        while isinstance(node, _Inner):
            node = node.kids[bisect_right(node.seps, key)]
        return node

    def find(self, key: float) -> float:
        leaf = self._leaf_for(key)
        i = bisect_left(leaf.keys, key)
        if i < len(leaf.keys) and leaf.keys[i] == key:
            return leaf.vals[i]
        raise NotFound(key)

    def insert(self, key: float, value: float) -> None:
        result = self._insert(self.root, key, value)
        if result is not None:
            sep, right = result
            self.root = _Inner([sep], [self.root, right])
            self.n_nodes += 1
        self.n_live += 1

    def _insert(self, node, key, value):
        if isinstance(node, _Leaf):
            i = bisect_left(node.keys, key)
            if i < len(node.keys) and node.keys[i] == key:
                raise DuplicateKey(key)
            node.keys.insert(i, key)
            node.vals.insert(i, value)
            if len(node.keys) <= self.order:
                return None
            mid = len(node.keys) // 2
            right = _Leaf()
            right.keys = node.keys[mid:]
            right.vals = node.vals[mid:]
            node.keys = node.keys[:mid]
            node.vals = node.vals[:mid]
            right.nxt = node.nxt
            node.nxt = right
            self.n_nodes += 1
            return right.keys[0], right
        j = bisect_right(node.seps, key)
        result = self._insert(node.kids[j], key, value)
        if result is None:
            return None
        sep, right = result
        node.seps.insert(j, sep)
        node.kids.insert(j + 1, right)
        if len(node.kids) <= self.order:
            return None
        mid = len(node.kids) // 2
        push = node.seps[mid - 1]
        right_inner = _Inner(node.seps[mid:], node.kids[mid:])
        node.seps = node.seps[: mid - 1]
        node.kids = node.kids[:mid]
        self.n_nodes += 1
        return push, right_inner

    def update(self, key: float, value: float) -> None:
        leaf = self._leaf_for(key)
        i = bisect_left(leaf.keys, key)
        if i < len(leaf.keys) and leaf.keys[i] == key:
            leaf.vals[i] = value
            return
        raise NotFound(key)

    def delete(self, key: float) -> None:
        leaf = self._leaf_for(key)
        i = bisect_left(leaf.keys, key)
        if i >= len(leaf.keys) or leaf.keys[i] != key:
            raise NotFound(key)
        del leaf.keys[i]
        del leaf.vals[i]
        self.n_live -= 1
        while isinstance(self.root, _Inner) and len(self.root.kids) == 1:
            self.root = self.root.kids[0]
            self.n_nodes -= 1

    def range_scan(self, start_key: float, length: int) -> list[tuple[float, float]]:
        if length < 1:
            raise CarmiError("scan length must be >= 1")
        out: list[tuple[float, float]] = []
        leaf = self._leaf_for(start_key)
        i = bisect_left(leaf.keys, start_key)
        while leaf is not None and len(out) < length:
            while i < len(leaf.keys) and len(out) < length:
                out.append((leaf.keys[i], leaf.vals[i]))
                i += 1
            leaf = leaf.nxt
            i = 0
        return out

    # -- accounting ---------------------------------------------------------------

    def depth(self) -> int:
        d = 1
        node = self.root
        while isinstance(node, _Inner):
            d += 1
            node = node.kids[0]
        return d

    def space_bytes(self) -> float:
        return float(self.n_nodes * self.node_bytes)
