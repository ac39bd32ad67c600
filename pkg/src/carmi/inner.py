"""The four order-preserving branch predictors, in inner and root form.

Inner variants fit the 56-byte parameter block of a node record, which
forces 32-bit float precision and small lookup tables.  Root variants are
unrestricted and keep full 64-bit precision.

All predictors are monotone nondecreasing in the key and clamp their
output to [0, c-1].  Monotonicity is load-bearing (it is what makes every
branch receive a contiguous key range), so the piecewise linear-regression
node re-anchors its evaluation at the key minimum and shifts segment
intercepts after float32 rounding: plain ``w*key + b`` evaluation can lose
monotonicity to cancellation when keys are large and tightly clustered.
"""

from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np

from .core import EmptyInput, FanoutTooLarge, NodeType

_F32_MAX = 3.4028234663852886e38
_SEGMENTS = 6          # linear models packed in one LR inner node
_PLR_SEGMENTS = 7      # segments in a piecewise-LR node (8 endpoints)
_HIS_BUCKETS = 160     # 10 groups x 16 bits in the histogram tables
_HIS_MAX_FANOUT = 16
_BS_MAX_FANOUT = 15    # 14 stored boundaries


def _f32(x: float) -> float:
    """Round to float32, saturating instead of overflowing to inf."""
    if x > _F32_MAX:
        return _F32_MAX
    if x < -_F32_MAX:
        return -_F32_MAX
    return float(np.float32(x))


def _f32_floor(x: float) -> float:
    """Round to float32 toward -inf; keeps stored split keys <= the real key,
    so the key at a cut position never leaks into the branch below it."""
    f = _f32(x)
    if f > x:
        f = float(np.nextafter(np.float32(f), np.float32("-inf")))
    return f


def _clamp_branch(p: float, c: int) -> int:
    b = int(p)
    if b < 0:
        return 0
    if b >= c:
        return c - 1
    return b


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope/intercept; slope clamped nonnegative."""
    n = len(x)
    if n == 0:
        return 0.0, 0.0
    mx = float(x.mean())
    my = float(y.mean())
    dx = x - mx
    var = float(dx @ dx)
    if var <= 0.0:
        return 0.0, my
    w = float(dx @ (y - my)) / var
    if w < 0.0:
        w = 0.0
    return w, my - w * mx


def _monotone_intercepts(key_min, key_max, slopes, intercepts):
    """Shift segment intercepts so the piecewise evaluation never dips.

    Works in the key-anchored domain (dk = key - key_min).  A small
    relative margin swamps the float fuzz of the segment-index computation;
    the nudge loop covers the case where adding the shift is itself
    absorbed by rounding.
    """
    adj = [float(b) for b in intercepts]
    span = key_max - key_min
    if span <= 0.0:
        return adj
    width = span / _SEGMENTS
    prev_end = -math.inf
    for s in range(_SEGMENTS):
        lo = s * width
        w = slopes[s]
        if prev_end != -math.inf:
            target = prev_end
            v = w * lo + adj[s]
            if v < target:
                adj[s] += target - v
                v = w * lo + adj[s]
                step = max(math.ulp(abs(w * lo)), math.ulp(abs(adj[s])), 1e-300)
                while v < target:
                    adj[s] += step
                    step *= 2.0
                    v = w * lo + adj[s]
        end = w * ((s + 1) * width) + adj[s]
        prev_end = end + 1e-9 * (1.0 + abs(end))
    return adj


class LRInner:
    """Six packed linear models over equal-width sub-ranges of the keys."""

    kind = NodeType.LR_INNER
    is_inner = True
    __slots__ = ("c", "key_min", "key_max", "slopes", "intercepts", "_adj", "start")

    def __init__(self, c, key_min, key_max, slopes, intercepts):
        self.c = c
        self.key_min = key_min
        self.key_max = key_max
        self.slopes = slopes
        self.intercepts = intercepts
        self._adj = _monotone_intercepts(key_min, key_max, slopes, intercepts)
        self.start = 0

    def predict(self, key: float) -> int:
        dk = key - self.key_min
        span = self.key_max - self.key_min
        if span > 0.0:
            s = int(dk * _SEGMENTS / span)
            if s < 0:
                s = 0
            elif s >= _SEGMENTS:
                s = _SEGMENTS - 1
        else:
            s = 0
        b = int(self.slopes[s] * dk + self._adj[s])
        if b < 0:
            return 0
        c = self.c
        return b if b < c else c - 1

    def predict_array(self, keys: np.ndarray) -> np.ndarray:
        dk = keys - self.key_min
        span = self.key_max - self.key_min
        if span > 0.0:
            seg = np.clip(np.trunc(dk * _SEGMENTS / span), 0, _SEGMENTS - 1).astype(np.int64)
        else:
            seg = np.zeros(len(keys), dtype=np.int64)
        w = np.asarray(self.slopes)[seg]
        b = np.asarray(self._adj)[seg]
        p = np.trunc(w * dk + b)
        return np.clip(p, 0, self.c - 1).astype(np.int64)

    def params_bytes(self) -> bytes:
        vals = [self.key_min, self.key_max]
        for w, b in zip(self.slopes, self.intercepts):
            vals.extend((w, b))
        return np.asarray(vals, dtype="<f4").tobytes()

    @classmethod
    def from_params(cls, params: bytes, c: int) -> "LRInner":
        vals = np.frombuffer(params[:56], dtype="<f4").astype(float)
        return cls(c, vals[0], vals[1], list(vals[2::2]), list(vals[3::2]))


def train_lr(keys: np.ndarray, c: int) -> LRInner:
    """Fit the six sub-models of an LR inner node.

    The key range is split into six equal-width sub-ranges; each sub-model
    is the least-squares fit of key -> rank*c/n on its sub-range, then the
    piecewise prediction is monotonized.
    """
    n = len(keys)
    if n == 0:
        raise EmptyInput("train_lr needs at least one key")
    if c < 1:
        raise FanoutTooLarge("fanout must be >= 1")
    key_min = _f32(float(keys[0]))
    key_max = _f32(float(keys[-1]))
    dk = keys - key_min
    targets = np.arange(n, dtype=float) * (c / n)
    span = key_max - key_min
    if span > 0.0:
        seg = np.clip(np.trunc(dk * _SEGMENTS / span), 0, _SEGMENTS - 1).astype(np.int64)
    else:
        seg = np.zeros(n, dtype=np.int64)
    bounds = np.searchsorted(seg, np.arange(_SEGMENTS + 1))
    slopes, intercepts = [], []
    for s in range(_SEGMENTS):
        lo, hi = bounds[s], bounds[s + 1]
        w, b = _linear_fit(dk[lo:hi], targets[lo:hi])
        slopes.append(max(_f32(w), 0.0))
        intercepts.append(_f32(b))
    return LRInner(c, key_min, key_max, slopes, intercepts)


class PLRInner:
    """Seven-segment piecewise linear model, stored as 8 endpoints."""

    kind = NodeType.PLR_INNER
    is_inner = True
    __slots__ = ("c", "knot_keys", "knot_idx", "start")

    def __init__(self, c, knot_keys, knot_idx):
        self.c = c
        self.knot_keys = knot_keys
        self.knot_idx = knot_idx
        self.start = 0

    def _interp(self, key: float) -> float:
        kk = self.knot_keys
        s = bisect_right(kk, key) - 1
        if s < 0:
            s = 0
        elif s >= _PLR_SEGMENTS:
            s = _PLR_SEGMENTS - 1
        denom = kk[s + 1] - kk[s]
        if denom <= 0.0:
            return float(self.knot_idx[s] if key < kk[s] else self.knot_idx[s + 1])
        di = self.knot_idx[s + 1] - self.knot_idx[s]
        return self.knot_idx[s] + (key - kk[s]) * di / denom

    def predict(self, key: float) -> int:
        return _clamp_branch(self._interp(key), self.c)

    def predict_array(self, keys: np.ndarray) -> np.ndarray:
        kk = np.asarray(self.knot_keys)
        ki = np.asarray(self.knot_idx, dtype=float)
        s = np.clip(np.searchsorted(kk, keys, side="right") - 1, 0, _PLR_SEGMENTS - 1)
        denom = kk[s + 1] - kk[s]
        safe = np.where(denom > 0.0, denom, 1.0)
        p = ki[s] + (keys - kk[s]) * (ki[s + 1] - ki[s]) / safe
        flat = np.where(keys < kk[s], ki[s], ki[s + 1])
        p = np.where(denom > 0.0, p, flat)
        return np.clip(np.trunc(p), 0, self.c - 1).astype(np.int64)

    def params_bytes(self) -> bytes:
        out = np.asarray(self.knot_keys, dtype="<f4").tobytes()
        out += np.asarray(self.knot_idx, dtype="<u2").tobytes()
        return out + bytes(56 - len(out))

    @classmethod
    def from_params(cls, params: bytes, c: int) -> "PLRInner":
        kk = [float(v) for v in np.frombuffer(params[:32], dtype="<f4")]
        ki = [int(v) for v in np.frombuffer(params[32:48], dtype="<u2")]
        return cls(c, kk, ki)


def _plr_knots(n: int, c: int):
    """Knot ranks and cumulative branch counts for a 7-segment model.

    With c <= 7 branches the knots sit exactly on the c-quantile cut keys
    (index j at the first key of branch j), so the branch step lands on a
    real key boundary; larger fanouts fall back to equal-frequency knots
    with rank-proportional indices.
    """
    if n == 1:
        return [0] * (_PLR_SEGMENTS + 1), [0] * (_PLR_SEGMENTS + 1)
    if c <= _PLR_SEGMENTS:
        ranks = [min(j * n // c, n - 1) for j in range(c + 1)]
        ranks += [n - 1] * (_PLR_SEGMENTS - c)
        idx = list(range(c + 1)) + [c] * (_PLR_SEGMENTS - c)
        return ranks, idx
    ranks = [round(j * (n - 1) / _PLR_SEGMENTS) for j in range(_PLR_SEGMENTS + 1)]
    idx = []
    prev = 0
    for r in ranks:
        prev = max(prev, int(round(r * c / n)))
        idx.append(prev)
    return ranks, idx


def train_plr(keys: np.ndarray, c: int) -> PLRInner:
    """Equal-frequency endpoints carrying cumulative branch counts."""
    n = len(keys)
    if n == 0:
        raise EmptyInput("train_plr needs at least one key")
    if c < 1:
        raise FanoutTooLarge("fanout must be >= 1")
    if c > 0xFFFF:
        raise FanoutTooLarge("piecewise-LR inner node stores 16-bit knot indices")
    ranks, knot_idx = _plr_knots(n, c)
    knot_keys = [_f32_floor(float(keys[r])) for r in ranks]
    return PLRInner(c, knot_keys, knot_idx)


class HisInner:
    """160-bucket histogram with compact Base/Offset child table.

    ``base[g]`` is the child index of the first bucket in 16-bucket group
    ``g``; bit ``j`` (j >= 1) of ``offset[g]`` is the 0/1 increment from
    bucket ``16g+j-1`` to ``16g+j`` (bit 0 is always zero).
    """

    kind = NodeType.HIS_INNER
    is_inner = True
    __slots__ = ("c", "key_min", "bucket_width", "base", "offset", "table", "start")

    def __init__(self, c, key_min, bucket_width, base, offset):
        self.c = c
        self.key_min = key_min
        self.bucket_width = bucket_width
        self.base = base
        self.offset = offset
        self.table = _his_decode_table(base, offset)
        self.start = 0

    def predict(self, key: float) -> int:
        b = int((key - self.key_min) / self.bucket_width)
        if b < 0:
            b = 0
        elif b >= _HIS_BUCKETS:
            b = _HIS_BUCKETS - 1
        v = self.table[b]
        return v if v < self.c else self.c - 1

    def predict_array(self, keys: np.ndarray) -> np.ndarray:
        b = np.clip(
            np.trunc((keys - self.key_min) / self.bucket_width), 0, _HIS_BUCKETS - 1
        ).astype(np.int64)
        return np.minimum(np.asarray(self.table)[b], self.c - 1)

    def params_bytes(self) -> bytes:
        out = np.asarray([self.key_min, self.bucket_width], dtype="<f4").tobytes()
        out += np.asarray(self.base, dtype="<u2").tobytes()
        out += np.asarray(self.offset, dtype="<u2").tobytes()
        return out + bytes(56 - len(out))

    @classmethod
    def from_params(cls, params: bytes, c: int) -> "HisInner":
        head = np.frombuffer(params[:8], dtype="<f4")
        base = [int(v) for v in np.frombuffer(params[8:28], dtype="<u2")]
        offset = [int(v) for v in np.frombuffer(params[28:48], dtype="<u2")]
        return cls(c, float(head[0]), float(head[1]), base, offset)


def _his_decode_table(base, offset):
    table = []
    for g in range(10):
        bits = offset[g]
        v = base[g]
        for j in range(16):
            if j and (bits >> j) & 1:
                v += 1
            table.append(v)
    return table


def _his_encode_table(table):
    base, offset = [], []
    for g in range(10):
        base.append(table[16 * g])
        bits = 0
        for j in range(1, 16):
            d = table[16 * g + j] - table[16 * g + j - 1]
            if d:
                bits |= 1 << j
        offset.append(bits)
    return base, offset


def train_his(keys: np.ndarray, c: int) -> HisInner:
    """Bucketed rank table; consecutive buckets may differ by at most 1.

    When the natural rank mapping jumps by more than one between adjacent
    buckets, the excess spills to the following buckets (the Offset
    encoding only holds 0/1 increments).
    """
    n = len(keys)
    if n == 0:
        raise EmptyInput("train_his needs at least one key")
    if c < 1:
        raise FanoutTooLarge("fanout must be >= 1")
    if c > _HIS_MAX_FANOUT:
        raise FanoutTooLarge(f"histogram inner node caps fanout at {_HIS_MAX_FANOUT}")
    key_min = _f32(float(keys[0]))
    key_max = _f32(float(keys[-1]))
    width = _f32((key_max - key_min) / _HIS_BUCKETS)
    if width <= 0.0:
        width = 1.0
    edges = key_min + np.arange(1, _HIS_BUCKETS + 1, dtype=float) * width
    counts = np.searchsorted(keys, edges, side="right")
    natural = np.minimum(counts * c // n, c - 1)
    table = []
    prev = int(natural[0])
    for b in range(_HIS_BUCKETS):
        v = min(int(natural[b]), prev + 1) if b else int(natural[0])
        table.append(v)
        prev = v
    base, offset = _his_encode_table(table)
    return HisInner(c, key_min, width, base, offset)


class BSInner:
    """Boundary table searched with binary search, B-tree style."""

    kind = NodeType.BS_INNER
    is_inner = True
    __slots__ = ("c", "bounds", "start")

    def __init__(self, c, bounds):
        self.c = c
        self.bounds = bounds  # c-1 nondecreasing keys
        self.start = 0

    def predict(self, key: float) -> int:
        b = bisect_right(self.bounds, key)
        return b if b < self.c else self.c - 1

    def predict_array(self, keys: np.ndarray) -> np.ndarray:
        b = np.searchsorted(np.asarray(self.bounds), keys, side="right")
        return np.clip(b, 0, self.c - 1).astype(np.int64)

    def params_bytes(self) -> bytes:
        padded = list(self.bounds) + [self.bounds[-1] if self.bounds else 0.0] * (
            14 - len(self.bounds)
        )
        return np.asarray(padded, dtype="<f4").tobytes()

    @classmethod
    def from_params(cls, params: bytes, c: int) -> "BSInner":
        vals = np.frombuffer(params[:56], dtype="<f4")
        return cls(c, [float(v) for v in vals[: c - 1]])


def train_bs(keys: np.ndarray, c: int) -> BSInner:
    """Equal-frequency split keys as boundaries; sizes differ by at most 1."""
    n = len(keys)
    if n == 0:
        raise EmptyInput("train_bs needs at least one key")
    if c < 1:
        raise FanoutTooLarge("fanout must be >= 1")
    if c > _BS_MAX_FANOUT:
        raise FanoutTooLarge(f"binary-search inner node caps fanout at {_BS_MAX_FANOUT}")
    bounds = [_f32_floor(float(keys[(j * n) // c])) for j in range(1, c)]
    return BSInner(c, bounds)


def predict(model, key: float) -> int:
    """Branch index for one key; clamped to [0, c-1] and monotone in key."""
    return model.predict(key)


# ---------------------------------------------------------------------------
# Root variants: same contracts, no 56-byte or fanout caps, 64-bit params.
# ---------------------------------------------------------------------------

class LRRoot:
    variant = "lr"
    __slots__ = ("c", "key_min", "slope", "intercept")

    def __init__(self, c, key_min, slope, intercept):
        self.c = c
        self.key_min = key_min
        self.slope = slope
        self.intercept = intercept

    def predict(self, key: float) -> int:
        b = int(self.slope * (key - self.key_min) + self.intercept)
        if b < 0:
            return 0
        c = self.c
        return b if b < c else c - 1

    def predict_array(self, keys: np.ndarray) -> np.ndarray:
        p = np.trunc(self.slope * (keys - self.key_min) + self.intercept)
        return np.clip(p, 0, self.c - 1).astype(np.int64)

    def space_bytes(self) -> float:
        return 24.0


class PLRRoot:
    variant = "plr"
    __slots__ = ("c", "knot_keys", "knot_idx")

    def __init__(self, c, knot_keys, knot_idx):
        self.c = c
        self.knot_keys = knot_keys
        self.knot_idx = knot_idx

    predict = PLRInner.predict
    _interp = PLRInner._interp
    predict_array = PLRInner.predict_array

    def space_bytes(self) -> float:
        return 200.0


class HisRoot:
    """Direct bucket table with c buckets (no increment cap)."""

    variant = "his"
    __slots__ = ("c", "key_min", "bucket_width", "table")

    def __init__(self, c, key_min, bucket_width, table):
        self.c = c
        self.key_min = key_min
        self.bucket_width = bucket_width
        self.table = table

    def predict(self, key: float) -> int:
        b = int((key - self.key_min) / self.bucket_width)
        if b < 0:
            b = 0
        elif b >= self.c:
            b = self.c - 1
        return int(self.table[b])

    def predict_array(self, keys: np.ndarray) -> np.ndarray:
        b = np.clip(
            np.trunc((keys - self.key_min) / self.bucket_width), 0, self.c - 1
        ).astype(np.int64)
        return self.table[b]

    def space_bytes(self) -> float:
        return float(self.c + 20)


class BSRoot:
    variant = "bs"
    __slots__ = ("c", "bounds", "_np_bounds")

    def __init__(self, c, bounds):
        self.c = c
        self.bounds = bounds
        self._np_bounds = np.asarray(bounds)

    def predict(self, key: float) -> int:
        b = bisect_right(self.bounds, key)
        return b if b < self.c else self.c - 1

    def predict_array(self, keys: np.ndarray) -> np.ndarray:
        b = np.searchsorted(self._np_bounds, keys, side="right")
        return np.clip(b, 0, self.c - 1).astype(np.int64)

    def space_bytes(self) -> float:
        return 8.0 * self.c + 8.0


def train_root(keys: np.ndarray, variant: str, c: int):
    """Train an unrestricted root of the given variant."""
    n = len(keys)
    if n == 0:
        raise EmptyInput("train_root needs at least one key")
    if c < 1:
        raise FanoutTooLarge("root fanout must be >= 1")
    if variant == "lr":
        key_min = float(keys[0])
        dk = keys - key_min
        targets = np.arange(n, dtype=float) * (c / n)
        w, b = _linear_fit(dk, targets)
        return LRRoot(c, key_min, w, b)
    if variant == "plr":
        ranks, knot_idx = _plr_knots(n, c)
        knot_keys = [float(keys[r]) for r in ranks]
        return PLRRoot(c, knot_keys, knot_idx)
    if variant == "his":
        key_min = float(keys[0])
        width = (float(keys[-1]) - key_min) / c
        if width <= 0.0:
            width = 1.0
        edges = key_min + np.arange(1, c + 1, dtype=float) * width
        counts = np.searchsorted(keys, edges, side="right")
        table = np.minimum(counts * c // n, c - 1)
        table = np.maximum.accumulate(table).astype(np.int64)
        return HisRoot(c, key_min, width, table)
    if variant == "bs":
        bounds = [float(keys[(j * n) // c]) for j in range(1, c)]
        return BSRoot(c, bounds)
    raise ValueError(f"unknown root variant {variant!r}")


INNER_TRAINERS = {
    "lr": train_lr,
    "plr": train_plr,
    "his": train_his,
    "bs": train_bs,
}

INNER_FANOUT_CAP = {
    "lr": 1 << 24,
    "plr": 0xFFFF,
    "his": _HIS_MAX_FANOUT,
    "bs": _BS_MAX_FANOUT,
}

INNER_CLASSES = {
    NodeType.LR_INNER: LRInner,
    NodeType.PLR_INNER: PLRInner,
    NodeType.HIS_INNER: HisInner,
    NodeType.BS_INNER: BSInner,
}
