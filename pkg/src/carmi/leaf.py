"""Leaf nodes: plain array, gapped array, and external array.

A leaf's metadata is a linear model (anchored at the leaf's first key) plus
an error window ``eps``.  Lookup predicts a slot, checks whether the key can
lie inside ``[p - eps//2, p + eps//2]``, and binary-searches either that
window or the whole leaf.  Gap slots (NaN key) are resolved by probing the
left neighbor, which is always occupied because no two gaps are ever
adjacent.  Deletion tombstones the slot but keeps the key so the sorted
order seen by binary search is undisturbed.

Serving-path searches run over the plain-list data plane; model fitting at
build time runs over numpy arrays (JIT-compiled when numba is available,
since construction fits every candidate leaf it considers).
"""

from __future__ import annotations

import math
from bisect import bisect_left

import numpy as np

from .core import (
    AtMaxCapacity,
    CapacityExceeded,
    DuplicateKey,
    EmptyInput,
    LeafFull,
    NodeType,
    NotFound,
    OutOfOrderInsert,
)

try:  # the fit kernel is JIT-compiled; everything degrades to numpy
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a normal install here
    _numba = None

DEFAULT_MAX_CAPACITY = 4096
DEFAULT_GAP_DENSITY = 1.0 / 3.0
DEFAULT_DENSITY_UPPER = 0.8  # occupancy that triggers expansion

_NAN = float("nan")


class SearchStats:
    """Counts data-array accesses made by leaf binary searches."""

    __slots__ = ("accesses", "window_hits", "lookups")

    def __init__(self):
        self.accesses = 0
        self.window_hits = 0
        self.lookups = 0


def optimal_epsilon(residuals, n: int) -> int:
    """Error window minimizing the modeled average search cost.

    Scans eps in 0..max|d|; a prediction within eps/2 costs floor(log2 eps)
    comparisons (0 for eps in {0, 1}), a miss costs floor(log2 n).  Ties go
    to the smaller eps.
    """
    if n < 1:
        raise EmptyInput("optimal_epsilon needs n >= 1")
    absd = np.abs(np.asarray(residuals, dtype=np.int64))
    if len(absd) == 0:
        raise EmptyInput("optimal_epsilon needs at least one residual")
    dmax = int(absd.max())
    if dmax == 0:
        return 0
    absd.sort()
    eps = np.arange(dmax + 1, dtype=np.int64)
    hits = np.searchsorted(absd, eps / 2.0, side="right")
    log_eps = np.floor(np.log2(np.maximum(eps, 1)))
    log_n = float(math.floor(math.log2(n)))
    costs = hits * log_eps + (len(absd) - hits) * log_n
    return int(np.argmin(costs))  # first minimum = smallest eps


class _LeafBase:
    is_inner = False
    __slots__ = ("c", "start", "size", "capacity", "anchor", "slope", "intercept",
                 "error", "p_hit", "tombs", "hot")

    def __init__(self):
        self.start = 0
        self.size = 0
        self.capacity = 0
        self.anchor = 0.0
        self.slope = 0.0
        self.intercept = 0.0
        self.error = 0
        self.p_hit = 1.0
        self.tombs = 0  # tombstoned slots (lets clean leaves skip dead checks)
        self.refresh_hot()

    def refresh_hot(self):
        """Pack the lookup-path fields into one tuple (fewer attribute loads).

        The range end is start-1 for an empty leaf, so lookups reject it
        before ever touching the data array.
        """
        lo = self.start
        span = self.size if self.dense else self.capacity
        self.hot = (self.dense, self.anchor, self.slope, self.intercept,
                    self.error >> 1, lo, lo + span - 1, self.tombs)

    def predict_slot(self, key: float) -> int:
        """Model position within the leaf, clamped to the slot domain."""
        p = int(self.slope * (key - self.anchor) + self.intercept)
        top = self._slot_domain() - 1
        if p < 0:
            return 0
        return p if p <= top else top

    def _slot_domain(self) -> int:
        raise NotImplementedError

    @property
    def gap_density(self) -> float:
        return 0.0

    def params_bytes(self) -> bytes:
        import struct

        out = struct.pack("<dddII", self.anchor, self.slope, self.intercept,
                          self.error, self.size)
        return out + bytes(56 - len(out))

    def apply_params(self, params: bytes):
        import struct

        self.anchor, self.slope, self.intercept, self.error, self.size = struct.unpack(
            "<dddII", params[:32]
        )
        self.refresh_hot()


class ArrayLeaf(_LeafBase):
    __slots__ = ()
    kind = NodeType.ARRAY_LEAF
    dense = True

    def _slot_domain(self) -> int:
        return self.size if self.size > 0 else 1


class GappedLeaf(_LeafBase):
    __slots__ = ()
    kind = NodeType.GAPPED_LEAF
    dense = False

    def _slot_domain(self) -> int:
        return self.capacity if self.capacity > 0 else 1

    @property
    def gap_density(self) -> float:
        return (self.capacity - self.size) / self.capacity if self.capacity else 0.0


class ExternalLeaf(_LeafBase):
    __slots__ = ()
    kind = NodeType.EXTERNAL_LEAF
    dense = True

    def _slot_domain(self) -> int:
        return self.size if self.size > 0 else 1


# ---------------------------------------------------------------------------
# Model fitting (build-time; numpy/numba plane)
# ---------------------------------------------------------------------------

def _fit_positions_np(keys: np.ndarray, positions: np.ndarray, domain: int):
    n = len(keys)
    if n == 0:
        return 0.0, 0.0, 0.0, 0, 1.0
    anchor = float(keys[0])
    dk = keys - anchor
    pos = positions.astype(float)
    mx = float(dk.mean())
    my = float(pos.mean())
    dx = dk - mx
    var = float(dx @ dx)
    slope = float(dx @ (pos - my)) / var if var > 0.0 else 0.0
    intercept = my - slope * mx
    pred = np.clip(np.trunc(slope * dk + intercept), 0, domain - 1).astype(np.int64)
    resid = pred - positions.astype(np.int64)
    eps = optimal_epsilon(resid, n)
    hits = int(np.count_nonzero(np.abs(resid) <= eps / 2.0))
    return anchor, slope, intercept, eps, hits / n


if _numba is not None:
    _njit = _numba.njit(cache=True, nogil=True)

    @_njit
    def _eps_scan_jit(absd_sorted, n):
        """argmin over eps of the window cost; ties to the smaller eps."""
        m = absd_sorted.size
        dmax = absd_sorted[m - 1]
        if dmax == 0:
            return 0
        log_n = math.floor(math.log2(n))
        best_eps = 0
        best_cost = math.inf
        ptr = 0
        for e in range(dmax + 1):
            half = e / 2.0
            while ptr < m and absd_sorted[ptr] <= half:
                ptr += 1
            log_e = math.floor(math.log2(e)) if e >= 1 else 0.0
            cost = ptr * log_e + (m - ptr) * log_n
            if cost < best_cost:
                best_cost = cost
                best_eps = e
        return best_eps

    @_njit
    def _fit_kernel(dk, positions, domain):
        n = dk.size
        sx = 0.0
        sy = 0.0
        for i in range(n):
            sx += dk[i]
            sy += positions[i]
        mx = sx / n
        my = sy / n
        var = 0.0
        cov = 0.0
        for i in range(n):
            a = dk[i] - mx
            var += a * a
            cov += a * (positions[i] - my)
        slope = cov / var if var > 0.0 else 0.0
        intercept = my - slope * mx
        top = domain - 1
        absd = np.empty(n, np.int64)
        for i in range(n):
            p = int(slope * dk[i] + intercept)
            if p < 0:
                p = 0
            elif p > top:
                p = top
            d = p - positions[i]
            absd[i] = -d if d < 0 else d
        absd.sort()
        eps = _eps_scan_jit(absd, n)
        half = eps / 2.0
        hits = 0
        for i in range(n):
            if absd[i] <= half:
                hits += 1
            else:
                break
        return slope, intercept, eps, hits

    def _fit_positions(keys, positions, domain):
        n = len(keys)
        if n == 0:
            return 0.0, 0.0, 0.0, 0, 1.0
        anchor = float(keys[0])
        slope, intercept, eps, hits = _fit_kernel(
            keys - anchor, np.asarray(positions, dtype=np.int64), domain
        )
        return anchor, slope, intercept, int(eps), hits / n

else:  # pragma: no cover
    _fit_positions = _fit_positions_np


_fit_positions.__doc__ = """Least-squares key->slot fit plus measured error window.

Returns (anchor, slope, intercept, eps, p_hit) with residuals taken from
the clamped prediction, exactly as lookups will compute it."""


def spread_positions(n: int, capacity: int) -> np.ndarray:
    """Occupied slot indices after even gap spreading (gaps never adjacent)."""
    gaps = capacity - n
    idx = np.arange(capacity, dtype=np.int64)
    is_gap = (idx + 1) * gaps // capacity > idx * gaps // capacity
    return idx[~is_gap]


def _stage_block(capacity: int, positions: np.ndarray, keys, values):
    """Dense staging arrays for one leaf block (gaps stay NaN)."""
    ks = np.full(capacity, np.nan)
    vs = np.zeros(capacity)
    ks[positions] = keys
    vs[positions] = values
    return ks, vs


def build_array_leaf(data, keys, values, capacity=None,
                     max_capacity=DEFAULT_MAX_CAPACITY) -> ArrayLeaf:
    """Store entries densely and fit the location model."""
    keys = np.asarray(keys, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(keys)
    if capacity is None:
        capacity = n
    if n > capacity or capacity > max_capacity:
        raise CapacityExceeded(f"{n} entries, capacity {capacity}, cap {max_capacity}")
    leaf = ArrayLeaf()
    leaf.size = n
    leaf.capacity = capacity
    if capacity > 0:
        leaf.start = data.allocate(capacity)
    if n > 0:
        ks, vs = _stage_block(capacity, np.arange(n), keys, values)
        data.write_block(leaf.start, ks, vs)
    leaf.anchor, leaf.slope, leaf.intercept, leaf.error, leaf.p_hit = _fit_positions(
        keys, np.arange(n), max(n, 1)
    )
    leaf.refresh_hot()
    return leaf


def build_gapped_leaf(data, keys, values, capacity,
                      max_capacity=DEFAULT_MAX_CAPACITY) -> GappedLeaf:
    """Spread entries with evenly distributed gaps and fit the model."""
    keys = np.asarray(keys, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(keys)
    if capacity < n or capacity > max_capacity:
        raise CapacityExceeded(f"{n} entries, capacity {capacity}, cap {max_capacity}")
    if capacity - n > capacity // 2:
        # more gaps than alternation allows -> adjacency inevitable
        raise CapacityExceeded("gap density above 0.5 forces adjacent gaps")
    leaf = GappedLeaf()
    leaf.size = n
    leaf.capacity = capacity
    positions = spread_positions(n, capacity) if capacity else np.arange(0)
    if capacity > 0:
        leaf.start = data.allocate(capacity)
        ks, vs = _stage_block(capacity, positions, keys, values)
        data.write_block(leaf.start, ks, vs)
    leaf.anchor, leaf.slope, leaf.intercept, leaf.error, leaf.p_hit = _fit_positions(
        keys, positions, max(capacity, 1)
    )
    leaf.refresh_hot()
    return leaf


# ---------------------------------------------------------------------------
# Gap-aware binary search (serving path; list plane)
# ---------------------------------------------------------------------------

def _search_eq(keys, lo, hi, key, stats=None):
    """Exact-match slot in [lo, hi], or -1.  Gaps probe their left neighbor."""
    acc = 0
    found = -1
    while lo <= hi:
        mid = (lo + hi) >> 1
        k = keys[mid]
        acc += 1
        if k != k:  # gap slot
            j = mid - 1
            if j < lo:
                lo = mid + 1
                continue
            k = keys[j]
            acc += 1
            if k == key:
                found = j
                break
            if k < key:
                lo = mid + 1
            else:
                hi = j - 1
        else:
            if k == key:
                found = mid
                break
            if k < key:
                lo = mid + 1
            else:
                hi = mid - 1
    if stats is not None:
        stats.accesses += acc
    return found


def _search_pred(keys, lo, hi, key):
    """Rightmost slot in [lo, hi] whose stored key is < key; lo-1 if none."""
    res = lo - 1
    while lo <= hi:
        mid = (lo + hi) >> 1
        k = keys[mid]
        if k != k:
            j = mid - 1
            if j < lo:
                lo = mid + 1
                continue
            k = keys[j]
            if k < key:
                res = j
                lo = mid + 1
            else:
                hi = j - 1
        else:
            if k < key:
                res = mid
                lo = mid + 1
            else:
                hi = mid - 1
    return res


def _locate_gapped(leaf, keys, key, stats=None) -> int:
    """Window-first gap-probing search over a gapped block."""
    lo = leaf.start
    hi = lo + leaf.capacity - 1
    p = int(leaf.slope * (key - leaf.anchor) + leaf.intercept)
    if p < 0:
        p = 0
    elif p > hi - lo:
        p = hi - lo
    p += lo
    w = leaf.error >> 1
    wlo = p - w
    whi = p + w
    if wlo < lo:
        wlo = lo
    if whi > hi:
        whi = hi
    if stats is not None:
        stats.lookups += 1
    klo = keys[wlo]
    if klo != klo:
        klo = keys[wlo + 1] if wlo < whi else _NAN
    khi = keys[whi]
    if khi != khi:
        khi = keys[whi - 1] if whi > wlo else _NAN
    if klo <= key <= khi:  # NaN endpoints fail the test and fall through
        if stats is not None:
            stats.window_hits += 1
        return _search_eq(keys, wlo, whi, key, stats)
    return _search_eq(keys, lo, hi, key, stats)


def _locate_dense(leaf, keys, key, stats=None) -> int:
    """Window-first search over a gap-free block (array/external leaves).

    The production path leans on C ``bisect``; the instrumented path runs
    the counted reference search, which visits the same slots.
    """
    lo = leaf.start
    hi = lo + leaf.size - 1
    p = int(leaf.slope * (key - leaf.anchor) + leaf.intercept)
    top = hi - lo
    if p < 0:
        p = 0
    elif p > top:
        p = top
    p += lo
    w = leaf.error >> 1
    wlo = p - w
    whi = p + w
    if wlo < lo:
        wlo = lo
    if whi > hi:
        whi = hi
    if stats is not None:
        stats.lookups += 1
        if keys[wlo] <= key <= keys[whi]:
            stats.window_hits += 1
            return _search_eq(keys, wlo, whi, key, stats)
        return _search_eq(keys, lo, hi, key, stats)
    if keys[wlo] <= key <= keys[whi]:
        i = bisect_left(keys, key, wlo, whi + 1)
    else:
        i = bisect_left(keys, key, lo, hi + 1)
    return i if i <= hi and keys[i] == key else -1


def locate_slot(leaf, keys, key, stats=None) -> int:
    """Slot holding ``key`` (live or tombstoned) or -1; window-first search."""
    if leaf.size == 0:
        return -1
    if leaf.kind == NodeType.GAPPED_LEAF:
        return _locate_gapped(leaf, keys, key, stats)
    return _locate_dense(leaf, keys, key, stats)


def leaf_find(leaf, data, key, stats=None) -> int:
    """Slot of the live entry holding ``key``; NotFound if absent/tombstoned."""
    s = locate_slot(leaf, data.keys, key, stats)
    if s < 0 or data.dead[s]:
        raise NotFound(key)
    return s


def array_insert(leaf, data, key, value) -> int:
    """Insert into the dense prefix; returns the number of shifted entries.

    Re-inserting a tombstoned key revives the slot in place.  Raises
    LeafFull when there is no free slot (the caller expands or splits).
    """
    keys = data.keys
    lo = leaf.start
    n = leaf.size
    pos = bisect_left(keys, key, lo, lo + n)
    if pos < lo + n and keys[pos] == key:
        if data.dead[pos]:
            data.values[pos] = value
            data.dead[pos] = False
            leaf.tombs -= 1
            leaf.refresh_hot()
            return 0
        raise DuplicateKey(key)
    if n >= leaf.capacity:
        raise LeafFull
    end = lo + n
    keys[pos + 1 : end + 1] = keys[pos:end]
    data.values[pos + 1 : end + 1] = data.values[pos:end]
    data.dead[pos + 1 : end + 1] = data.dead[pos:end]
    keys[pos] = key
    data.values[pos] = value
    data.dead[pos] = False
    leaf.size = n + 1
    leaf.refresh_hot()
    return end - pos


def gapped_insert(leaf, data, key, value) -> int:
    """Insert into a gapped leaf; returns entries moved before a gap opened.

    The caller is responsible for expanding beforehand when occupancy is at
    the expansion threshold; with a free slot guaranteed somewhere, the run
    of occupied slots right of the insertion point is shifted into the first
    gap (or, if the right side is packed, the left run shifts left).
    """
    keys = data.keys
    lo = leaf.start
    hi = lo + leaf.capacity - 1
    pred = _search_pred(keys, lo, hi, key)
    nxt = pred + 1
    while nxt <= hi and keys[nxt] != keys[nxt]:
        nxt += 1
    if nxt <= hi and keys[nxt] == key:
        if data.dead[nxt]:
            data.values[nxt] = value
            data.dead[nxt] = False
            leaf.tombs -= 1
            leaf.refresh_hot()
            return 0
        raise DuplicateKey(key)
    if leaf.size >= leaf.capacity:
        raise LeafFull
    pos = pred + 1
    if pos <= hi and keys[pos] != keys[pos]:
        keys[pos] = key
        data.values[pos] = value
        data.dead[pos] = False
        leaf.size += 1
        leaf.refresh_hot()
        return 0
    g = pos
    while g <= hi and keys[g] == keys[g]:
        g += 1
    if g <= hi:  # shift [pos, g) right into the gap at g
        keys[pos + 1 : g + 1] = keys[pos:g]
        data.values[pos + 1 : g + 1] = data.values[pos:g]
        data.dead[pos + 1 : g + 1] = data.dead[pos:g]
        keys[pos] = key
        data.values[pos] = value
        data.dead[pos] = False
        leaf.size += 1
        leaf.refresh_hot()
        return g - pos
    g = pos - 1
    while g >= lo and keys[g] == keys[g]:
        g -= 1
    # a gap must exist on the left: size < capacity and none to the right
    keys[g : pos - 1] = keys[g + 1 : pos]
    data.values[g : pos - 1] = data.values[g + 1 : pos]
    data.dead[g : pos - 1] = data.dead[g + 1 : pos]
    keys[pos - 1] = key
    data.values[pos - 1] = value
    data.dead[pos - 1] = False
    leaf.size += 1
    leaf.refresh_hot()
    return pos - 1 - g


def _collect_live(leaf, data):
    """Occupied entries (including tombstones) of a leaf block, in order."""
    sl = slice(leaf.start, leaf.start + leaf.capacity)
    ks = np.asarray(data.keys[sl])
    mask = ks == ks
    vs = np.asarray(data.values[sl])[mask]
    dd = np.asarray(data.dead[sl], dtype=bool)[mask]
    return ks[mask], vs, dd


def expand_gapped(leaf, data, max_capacity=DEFAULT_MAX_CAPACITY) -> None:
    """Re-spread into a roughly doubled block and refit the model.

    The new capacity is 2*min(capacity, size): doubling straight from the
    expansion threshold would push gap density above 0.5, which makes
    adjacent gaps unavoidable.  At the capacity cap the caller must split.
    """
    base = min(leaf.capacity, max(leaf.size, 1))
    new_cap = min(2 * max(base, 1), max_capacity)
    if new_cap <= leaf.capacity:
        raise AtMaxCapacity
    ks, vs, dd = _collect_live(leaf, data)
    old_start, old_cap = leaf.start, leaf.capacity
    start = data.allocate(new_cap)
    positions = spread_positions(len(ks), new_cap)
    sk, sv = _stage_block(new_cap, positions, ks, vs)
    data.write_block(start, sk, sv)
    for p, dead in zip(positions.tolist(), dd.tolist()):
        if dead:
            data.dead[start + p] = True
    leaf.start = start
    leaf.capacity = new_cap
    leaf.size = len(ks)
    leaf.anchor, leaf.slope, leaf.intercept, leaf.error, leaf.p_hit = _fit_positions(
        ks, positions, max(new_cap, 1)
    )
    leaf.tombs = int(dd.sum())
    leaf.refresh_hot()
    if old_cap > 0:
        data.free(old_start, old_cap)


def expand_array(leaf, data, max_capacity=DEFAULT_MAX_CAPACITY) -> None:
    """Move the dense prefix into a block with twice the slack."""
    new_cap = min(2 * max(leaf.capacity, 1), max_capacity)
    if new_cap <= leaf.capacity:
        raise AtMaxCapacity
    n = leaf.size
    old_start, old_cap = leaf.start, leaf.capacity
    start = data.allocate(new_cap)
    data.keys[start : start + n] = data.keys[old_start : old_start + n]
    data.values[start : start + n] = data.values[old_start : old_start + n]
    data.dead[start : start + n] = data.dead[old_start : old_start + n]
    leaf.start = start
    leaf.capacity = new_cap
    leaf.refresh_hot()
    if old_cap > 0:
        data.free(old_start, old_cap)


def leaf_delete(leaf, data, key) -> None:
    """Lazy deletion: tombstone the slot, keep the key for search order."""
    s = locate_slot(leaf, data.keys, key)
    if s < 0 or data.dead[s]:
        raise NotFound(key)
    data.dead[s] = True
    leaf.tombs += 1
    leaf.refresh_hot()


def collect_range(leaf, data, start_key, out, need) -> int:
    """Append up to ``need`` live entries with key >= start_key, in order."""
    keys = data.keys
    dead = data.dead
    values = data.values
    lo = leaf.start
    hi = lo + leaf._slot_domain() - 1
    if leaf.size == 0:
        return need
    i = _search_pred(keys, lo, hi, start_key) + 1
    while i <= hi and need > 0:
        k = keys[i]
        if k == k and not dead[i]:
            out.append((k, values[i]))
            need -= 1
        i += 1
    return need


# ---------------------------------------------------------------------------
# External array leaves
# ---------------------------------------------------------------------------

class ExternalStore:
    """Caller-owned sorted record array that external leaves point into."""

    def __init__(self, keys, values):
        self.keys = [float(k) for k in keys]
        self.values = [float(v) for v in values]
        self.dead = [False] * len(self.keys)

    @property
    def length(self) -> int:
        return len(self.keys)

    def append(self, key, value):
        self.keys.append(key)
        self.values.append(value)
        self.dead.append(False)


def build_external_leaf(store, start, size) -> ExternalLeaf:
    leaf = ExternalLeaf()
    leaf.start = start
    leaf.size = size
    leaf.capacity = size
    ks = np.asarray(store.keys[start : start + size])
    leaf.anchor, leaf.slope, leaf.intercept, leaf.error, leaf.p_hit = _fit_positions(
        ks, np.arange(size), max(size, 1)
    )
    leaf.refresh_hot()
    return leaf


def external_find(leaf, store, key, stats=None) -> int:
    """Same contract as leaf_find, over the external record array."""
    s = locate_slot(leaf, store.keys, key, stats)
    if s < 0 or store.dead[s]:
        raise NotFound(key)
    return s


def external_insert(leaf, store, key, value) -> None:
    """Append-only insert: key must exceed the current global maximum."""
    if store.length > 0 and key <= store.keys[-1]:
        raise OutOfOrderInsert(key)
    store.append(key, value)
    leaf.size += 1
    leaf.capacity = leaf.size
    leaf.refresh_hot()
