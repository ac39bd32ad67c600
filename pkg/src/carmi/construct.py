"""Cost-based index construction.

Ranges larger than ``algorithm_threshold`` pick their inner node with the
greedy entropy score (local information only); ranges at or below it run a
memoized dynamic program that compares the best single leaf against every
(inner type x fanout) candidate and recurses.  At DP scale the root itself
is enumerated against the global objective, which is what makes the
lambda sweep produce an exact time/space frontier; at greedy scale the root
is picked by score like any other greedy node.

Sub-ranges are always contiguous runs of the globally sorted key array
because every model is order-preserving, so memo keys are slice boundaries.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CarmiError,
    DataArray,
    DuplicateKey,
    EmptyInput,
    FanoutTooLarge,
    NodeType,
    NonFiniteKey,
    NoViableCandidate,
    TooLarge,
    check_finite_keys,
)
from .cost import (
    CostConstants,
    entropy,
    node_performance,
    parse_kv_file,
    root_tcost,
    scost_leaf,
    tcost_inner,
    tcost_leaf_insert,
    tcost_leaf_read,
    tree_objective,
)
from .inner import INNER_FANOUT_CAP, INNER_TRAINERS, train_bs, train_root
from .leaf import (
    ArrayLeaf,
    ExternalLeaf,
    ExternalStore,
    GappedLeaf,
    _fit_positions,
    _stage_block,
    build_external_leaf,
    spread_positions,
)
from .index import Index


@dataclass
class BuildConfig:
    """Construction thresholds, candidate sets, and cost constants."""

    lam: float = 1e-7
    algorithm_threshold: int = 4096   # DP <-> greedy switch
    leaf_threshold: int = 1024        # below this a range is always a leaf
    max_capacity: int = 4096          # per-leaf slot cap
    fanout_candidates: tuple = (4, 8, 16)
    inner_kinds: tuple = ("lr", "plr", "his", "bs")
    root_variants: tuple = ("lr", "plr", "his", "bs")
    root_fanout: int | None = None    # None: sweep powers of two in [n/4096, n/256]
    gap_density: float = 1.0 / 3.0    # d0 for fresh gapped leaves
    density_upper: float = 0.8        # occupancy triggering expansion
    leaf_kinds: tuple = ("array", "gapped")
    external: bool = False
    constants: CostConstants = field(default_factory=CostConstants)

    def __post_init__(self):
        if self.lam < 0:
            raise CarmiError("lambda must be nonnegative")
        if self.leaf_threshold > self.algorithm_threshold:
            raise CarmiError("kLeafThreshold must be <= kAlgorithmThreshold")
        if self.max_capacity < self.leaf_threshold:
            raise CarmiError("kMaxCapacity must be >= kLeafThreshold")
        if not 0.0 < self.gap_density <= 0.5:
            raise CarmiError("gap density must be in (0, 0.5]")


_CONFIG_KEYS = {
    "lambda": ("lam", float),
    "kAlgorithmThreshold": ("algorithm_threshold", int),
    "kLeafThreshold": ("leaf_threshold", int),
    "kMaxCapacity": ("max_capacity", int),
    "fanout_candidates": ("fanout_candidates", lambda s: tuple(int(v) for v in s.split(","))),
    "inner_kinds": ("inner_kinds", lambda s: tuple(s.split(","))),
    "root_variants": ("root_variants", lambda s: tuple(s.split(","))),
    "root_fanout": ("root_fanout", int),
    "gap_density": ("gap_density", float),
    "density_upper": ("density_upper", float),
}


def load_config(path) -> BuildConfig:
    """BuildConfig and CostConstants share one key=value file."""
    kv = parse_kv_file(path)
    constants = CostConstants().apply(kv)
    cfg = BuildConfig(constants=constants)
    for key in list(kv):
        if key in _CONFIG_KEYS:
            attr, conv = _CONFIG_KEYS[key]
            setattr(cfg, attr, conv(kv.pop(key)))
    if kv:
        raise CarmiError(f"unknown config keys: {sorted(kv)}")
    cfg.__post_init__()
    return cfg


@dataclass
class TrainingWorkload:
    """Weighted read keys plus an insert-key sample used during construction."""

    read_keys: np.ndarray
    read_weights: np.ndarray
    insert_keys: np.ndarray
    read_ratio: float

    @property
    def mass(self) -> float:
        return float(self.read_weights.sum() + len(self.insert_keys))


def default_training_workload(keys, read_ratio: float = 1.0, insert_region=None,
                              seed: int = 0) -> TrainingWorkload:
    """Cold-start workload: one uniform read per key, inserts sampled from
    the key set (or from ``insert_region``'s key range) at the given ratio."""
    keys = np.asarray(keys, dtype=float)
    n = len(keys)
    if not 0.0 < read_ratio <= 1.0:
        raise CarmiError("read_ratio must be in (0, 1]")
    weights = np.ones(n)
    if read_ratio >= 1.0 or n == 0:
        inserts = np.empty(0)
    else:
        k = int(round(n * (1.0 - read_ratio) / read_ratio))
        lo, hi = 0, n
        if insert_region is not None:
            lo = int(np.searchsorted(keys, insert_region[0], side="left"))
            hi = int(np.searchsorted(keys, insert_region[1], side="right"))
            hi = max(hi, lo + 1)
        rng = np.random.default_rng(seed)
        inserts = np.sort(keys[rng.integers(lo, hi, size=k)])
    return TrainingWorkload(keys, weights, inserts, read_ratio)


def partition(keys, model) -> list[tuple[int, int]]:
    """Contiguous (lo, hi) sub-ranges of sorted keys per predicted branch."""
    labels = model.predict_array(np.asarray(keys, dtype=float))
    bounds = np.searchsorted(labels, np.arange(model.c + 1))
    return [(int(bounds[j]), int(bounds[j + 1])) for j in range(model.c)]


def kind_fanouts(kind: str, config: BuildConfig) -> list[int]:
    """Candidate fanouts for one inner type, clamped to its encoding cap."""
    cap = INNER_FANOUT_CAP[kind]
    return sorted({min(int(c), cap) for c in config.fanout_candidates if c >= 2})


@dataclass
class LeafPlan:
    kind: str            # 'array' | 'gapped' | 'external'
    lo: int
    hi: int
    capacity: int
    anchor: float
    slope: float
    intercept: float
    error: int
    p_hit: float
    cost: float

    is_leaf = True


@dataclass
class InnerPlan:
    kind: str
    model: object
    children: list
    cost: float

    is_leaf = False


class Builder:
    """Shared construction state: sorted keys, workload prefix sums, memo."""

    def __init__(self, keys, values, training: TrainingWorkload, config: BuildConfig):
        self.keys = np.asarray(keys, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.cfg = config
        self.consts = config.constants
        self.training = training
        self.rk = np.asarray(training.read_keys, dtype=float)
        self.rw_prefix = np.concatenate([[0.0], np.cumsum(training.read_weights)])
        self.ik = np.asarray(training.insert_keys, dtype=float)
        self.m = max(float(self.rw_prefix[-1] + len(self.ik)), 1.0)
        self.memo: dict = {}

    # -- workload routing ---------------------------------------------------

    def _mass(self, rlo, rhi, ilo, ihi) -> float:
        return float(self.rw_prefix[rhi] - self.rw_prefix[rlo]) + (ihi - ilo)

    def _route(self, model, lo, hi, rlo, rhi, ilo, ihi):
        c = model.c
        edges = np.arange(c + 1)
        kb = np.searchsorted(model.predict_array(self.keys[lo:hi]), edges) + lo
        rb = np.searchsorted(model.predict_array(self.rk[rlo:rhi]), edges) + rlo
        ib = np.searchsorted(model.predict_array(self.ik[ilo:ihi]), edges) + ilo
        return kb, rb, ib

    # -- leaf choice ----------------------------------------------------------

    def leaf_optimal(self, lo, hi, rlo, rhi, ilo, ihi) -> LeafPlan:
        """Cheapest leaf for the range: array vs gapped (or external)."""
        n = hi - lo
        if n > self.cfg.max_capacity:
            raise TooLarge(f"{n} keys exceed kMaxCapacity {self.cfg.max_capacity}")
        reads = float(self.rw_prefix[rhi] - self.rw_prefix[rlo])
        inserts = float(ihi - ilo)
        ks = self.keys[lo:hi]
        if self.cfg.external:
            anchor, slope, intercept, eps, p_hit = _fit_positions(
                ks, np.arange(n), max(n, 1))
            read_ns = tcost_leaf_read(max(n, 1), eps, p_hit, "array", 0.0, self.consts)
            t = reads * read_ns
            if inserts:
                t += inserts * tcost_leaf_insert(n, 0.0, "external", read_ns, self.consts)
            cost = t / self.m + self.cfg.lam * scost_leaf(0, self.consts)
            return LeafPlan("external", lo, hi, n, anchor, slope, intercept,
                            eps, p_hit, cost)
        best = None
        if "array" in self.cfg.leaf_kinds or n == 0:
            anchor, slope, intercept, eps, p_hit = _fit_positions(
                ks, np.arange(n), max(n, 1))
            read_ns = tcost_leaf_read(max(n, 1), eps, p_hit, "array", 0.0, self.consts)
            t = reads * read_ns
            if inserts:
                t += inserts * tcost_leaf_insert(n, 0.0, "array", read_ns, self.consts)
            cost = t / self.m + self.cfg.lam * scost_leaf(n, self.consts)
            best = LeafPlan("array", lo, hi, n, anchor, slope, intercept,
                            eps, p_hit, cost)
        if "gapped" in self.cfg.leaf_kinds and n > 0:
            cap = self._gapped_capacity(n, reads, inserts)
            if cap is not None:
                positions = spread_positions(n, cap)
                anchor, slope, intercept, eps, p_hit = _fit_positions(ks, positions, cap)
                d = (cap - n) / cap
                read_ns = tcost_leaf_read(n, eps, p_hit, "gapped", d, self.consts)
                t = reads * read_ns
                if inserts:
                    t += inserts * tcost_leaf_insert(n, d, "gapped", read_ns, self.consts)
                cost = t / self.m + self.cfg.lam * scost_leaf(cap, self.consts)
                if best is None or cost < best.cost:
                    best = LeafPlan("gapped", lo, hi, cap, anchor, slope, intercept,
                                    eps, p_hit, cost)
        if best is None:
            raise CarmiError("no leaf kind enabled for this range")
        return best

    def _gapped_capacity(self, n, reads, inserts):
        """Size the gap reserve by the range's insert share; None if infeasible."""
        mass = reads + inserts
        share = inserts / mass if mass > 0 else 0.0
        cap = int(math.ceil(n * (1.0 + share) / (1.0 - self.cfg.gap_density)))
        cap = min(cap, 2 * n, self.cfg.max_capacity)
        if cap < n + 1:
            return None
        return cap

    # -- dynamic program ------------------------------------------------------

    def dp(self, lo, hi, rlo, rhi, ilo, ihi):
        """Optimal sub-structure for a contiguous range (memoized)."""
        key = (lo, hi, rlo, rhi, ilo, ihi)
        plan = self.memo.get(key)
        if plan is not None:
            return plan
        n = hi - lo
        if n < self.cfg.leaf_threshold:
            plan = self.leaf_optimal(lo, hi, rlo, rhi, ilo, ihi)
        else:
            plan = None
            if n <= self.cfg.max_capacity:
                try:
                    plan = self.leaf_optimal(lo, hi, rlo, rhi, ilo, ihi)
                except CarmiError:  # no feasible leaf kind at this size
                    plan = None
            for kind in self.cfg.inner_kinds:
                for c in kind_fanouts(kind, self.cfg):
                    cand = self._inner_candidate(kind, c, lo, hi, rlo, rhi, ilo, ihi)
                    if cand is not None and (plan is None or cand.cost < plan.cost):
                        plan = cand
            if plan is None:
                cand = self._inner_candidate("bs", 2, lo, hi, rlo, rhi, ilo, ihi)
                if cand is None:
                    raise NoViableCandidate(f"range of {n} keys cannot be partitioned")
                plan = cand
        self.memo[key] = plan
        return plan

    def _inner_candidate(self, kind, c, lo, hi, rlo, rhi, ilo, ihi):
        try:
            model = INNER_TRAINERS[kind](self.keys[lo:hi], c)
        except FanoutTooLarge:
            return None
        kb, rb, ib = self._route(model, lo, hi, rlo, rhi, ilo, ihi)
        if int(np.max(np.diff(kb))) == hi - lo:
            return None  # one child swallows the range: no progress
        cost = 0.0
        children = []
        for j in range(c):
            sub = self.dp(kb[j], kb[j + 1], rb[j], rb[j + 1], ib[j], ib[j + 1])
            cost += sub.cost
            children.append(sub)
        q = self._mass(rlo, rhi, ilo, ihi)
        cost += (q / self.m) * tcost_inner(kind, self.consts) \
            + self.cfg.lam * self.consts.node_bytes
        return InnerPlan(kind, model, children, cost)

    # -- greedy node selection ------------------------------------------------

    def greedy_select(self, lo, hi):
        """Best (kind, fanout) by the entropy score; BS/2 as a last resort."""
        ks = self.keys[lo:hi]
        p_mass = (hi - lo) / max(len(self.keys), 1)
        return greedy_select(ks, self.cfg, p_mass)


def greedy_select(keys, config: BuildConfig, p_mass: float = 1.0):
    """Pick the inner design minimizing (TCost + lam*64c/P) / H.

    Degenerate candidates (zero partition entropy) are skipped; if nothing
    survives, a binary-search node with c=2 is used, which cannot be
    degenerate on two or more distinct keys.
    """
    keys = np.asarray(keys, dtype=float)
    consts = config.constants
    best = None
    best_score = math.inf
    for kind in config.inner_kinds:
        for c in kind_fanouts(kind, config):
            try:
                model = INNER_TRAINERS[kind](keys, c)
            except FanoutTooLarge:
                continue
            sizes = np.bincount(model.predict_array(keys), minlength=c)
            h = entropy(sizes)
            if h <= 0.0:
                continue
            score = node_performance(
                tcost_inner(kind, consts), h, config.lam, p_mass,
                consts.node_bytes * c,
            )
            if score < best_score:
                best, best_score = model, score
    if best is not None:
        return best
    if len(keys) < 2:
        raise NoViableCandidate("greedy selection needs at least two distinct keys")
    return train_bs(keys, 2)


def construct_leaf_optimal(keys, workload: TrainingWorkload, config: BuildConfig):
    """Public wrapper: cheapest leaf blueprint for a whole key set."""
    b = Builder(keys, np.zeros(len(keys)), workload, config)
    plan = b.leaf_optimal(0, len(b.keys), 0, len(b.rk), 0, len(b.ik))
    return plan, plan.cost


def construct_dp(keys, workload: TrainingWorkload, config: BuildConfig, memo=None):
    """Public wrapper: run the DP over a whole key set."""
    b = Builder(keys, np.zeros(len(keys)), workload, config)
    if memo is not None:
        b.memo = memo
    plan = b.dp(0, len(b.keys), 0, len(b.rk), 0, len(b.ik))
    return plan, plan.cost


# ---------------------------------------------------------------------------
# Full build
# ---------------------------------------------------------------------------

def _root_fanout_candidates(n: int, config: BuildConfig) -> list[int]:
    if config.root_fanout:
        return [config.root_fanout]
    lo = max(2, n // 4096)
    hi = max(2, n // 256)
    c = 1 << max(lo - 1, 1).bit_length() if lo > 2 else 2
    cands = []
    while c <= hi:
        cands.append(c)
        c <<= 1
    return cands or [2]


class _Materializer:
    """Turns blueprints into node records and data blocks.

    Children are laid out contiguously; leaves are visited left-to-right so
    the initial data layout follows key order and the leaf-order table can
    be built on the way.
    """

    def __init__(self, builder: Builder, nodes: list, data: DataArray,
                 leaf_order: list, store=None):
        self.b = builder
        self.nodes = nodes
        self.data = data
        self.leaf_order = leaf_order
        self.store = store

    def alloc(self, c: int) -> int:
        start = len(self.nodes)
        self.nodes.extend([None] * c)
        return start

    def materialize(self, slot: int, plan):
        if plan.is_leaf:
            self.nodes[slot] = self._make_leaf(plan)
            self.leaf_order.append(slot)
            return
        model = plan.model
        model.start = self.alloc(model.c)
        self.nodes[slot] = model
        for j, child in enumerate(plan.children):
            self.materialize(model.start + j, child)

    def _make_leaf(self, plan: LeafPlan):
        n = plan.hi - plan.lo
        if plan.kind == "external":
            leaf = ExternalLeaf()
            leaf.start = plan.lo
            leaf.size = n
            leaf.capacity = n
        elif plan.kind == "gapped":
            leaf = GappedLeaf()
            leaf.size = n
            leaf.capacity = plan.capacity
            if plan.capacity:
                leaf.start = self.data.allocate(plan.capacity)
                positions = spread_positions(n, plan.capacity)
                ks, vs = _stage_block(plan.capacity, positions,
                                      self.b.keys[plan.lo : plan.hi],
                                      self.b.values[plan.lo : plan.hi])
                self.data.write_block(leaf.start, ks, vs)
        else:
            leaf = ArrayLeaf()
            leaf.size = n
            leaf.capacity = plan.capacity
            if plan.capacity:
                leaf.start = self.data.allocate(plan.capacity)
                self.data.write_block(leaf.start, self.b.keys[plan.lo : plan.hi],
                                      self.b.values[plan.lo : plan.hi])
        leaf.anchor = plan.anchor
        leaf.slope = plan.slope
        leaf.intercept = plan.intercept
        leaf.error = plan.error
        leaf.p_hit = plan.p_hit
        leaf.refresh_hot()
        return leaf


def build_index(keys, values, training: TrainingWorkload | None = None,
                config: BuildConfig | None = None, external_store=None):
    """Sort-free entry point: keys must be deduplicated and finite.

    Returns (Index, CostBreakdown).  The root is enumerated against the
    global objective when the key count is within DP scale and picked by
    greedy score above it; children follow the threshold switching rules.
    """
    config = config or BuildConfig()
    keys = np.asarray(keys, dtype=float)
    values = np.asarray(values, dtype=float)
    check_finite_keys(keys)
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    values = values[order]
    if len(keys) > 1 and not np.all(np.diff(keys) > 0):
        raise DuplicateKey("duplicate keys in build input")
    if training is None:
        training = default_training_workload(keys)
    if sys.getrecursionlimit() < 100_000:
        sys.setrecursionlimit(100_000)  # DP ranges can shrink one key per level

    n = len(keys)
    b = Builder(keys, values, training, config)
    nodes: list = []
    data = DataArray(max(int(n * 1.7) + 64, 64))
    leaf_order: list = []
    store = external_store
    if config.external and store is None:
        store = ExternalStore(keys, values)

    if n == 0:
        root = train_root(np.zeros(1), "lr", 1)
        mat = _Materializer(b, nodes, data, leaf_order, store)
        slot = mat.alloc(1)
        mat.materialize(slot, b.leaf_optimal(0, 0, 0, 0, 0, 0))
        index = Index(root, nodes, data, leaf_order, config, 0, store)
        return index, tree_objective(index, training, config.lam, config.constants)

    mat = _Materializer(b, nodes, data, leaf_order, store)
    if n > config.algorithm_threshold:
        root = _greedy_root(keys, config)
        kb, rb, ib = b._route(root, 0, n, 0, len(b.rk), 0, len(b.ik))
        mat.alloc(root.c)
        for j in range(root.c):
            _build_greedy(b, mat, j, kb[j], kb[j + 1], rb[j], rb[j + 1],
                          ib[j], ib[j + 1])
    else:
        root, plans = _dp_root(b)
        kb, rb, ib = b._route(root, 0, n, 0, len(b.rk), 0, len(b.ik))
        mat.alloc(root.c)
        for j in range(root.c):
            mat.materialize(j, plans[j])

    index = Index(root, nodes, data, leaf_order, config, n, store)
    return index, tree_objective(index, training, config.lam, config.constants)


def _greedy_root(keys, config: BuildConfig):
    """Root by greedy score over (variant x fanout); P(root) = 1."""
    n = len(keys)
    consts = config.constants
    best = None
    best_score = math.inf
    for variant in config.root_variants:
        for c in _root_fanout_candidates(n, config):
            model = train_root(keys, variant, c)
            sizes = np.bincount(model.predict_array(keys), minlength=c)
            h = entropy(sizes)
            if h <= 0.0:
                continue
            score = node_performance(root_tcost(variant, c, consts), h,
                                     config.lam, 1.0, consts.node_bytes * c)
            if score < best_score:
                best, best_score = model, score
    if best is None:
        best = train_root(keys, "bs", 2)
    return best


def _dp_root(builder: Builder):
    """Enumerate root candidates against the full objective (DP scale)."""
    b = builder
    cfg = b.cfg
    n = len(b.keys)
    best = None
    for variant in cfg.root_variants:
        for c in _root_fanout_candidates(n, cfg):
            model = train_root(b.keys, variant, c)
            kb, rb, ib = b._route(model, 0, n, 0, len(b.rk), 0, len(b.ik))
            cost = 0.0
            plans = []
            for j in range(c):
                sub = b.dp(kb[j], kb[j + 1], rb[j], rb[j + 1], ib[j], ib[j + 1])
                cost += sub.cost
                plans.append(sub)
            cost += root_tcost(variant, c, b.consts) \
                + cfg.lam * model.space_bytes()
            if best is None or cost < best[0]:
                best = (cost, model, plans)
    return best[1], best[2]


def _build_greedy(b: Builder, mat: _Materializer, slot, lo, hi, rlo, rhi, ilo, ihi):
    n = hi - lo
    if n <= b.cfg.algorithm_threshold:
        mat.materialize(slot, b.dp(lo, hi, rlo, rhi, ilo, ihi))
        return
    model = b.greedy_select(lo, hi)
    model.start = mat.alloc(model.c)
    mat.nodes[slot] = model
    kb, rb, ib = b._route(model, lo, hi, rlo, rhi, ilo, ihi)
    for j in range(model.c):
        _build_greedy(b, mat, model.start + j, kb[j], kb[j + 1],
                      rb[j], rb[j + 1], ib[j], ib[j + 1])


# ---------------------------------------------------------------------------
# Node splitting (serving-time mutation)
# ---------------------------------------------------------------------------

def split_leaf(index: Index, slot: int) -> None:
    """Replace an overfull leaf with a greedy-selected local subtree.

    Uses local information only: the leaf's own keys pick the inner design.
    Tombstones are dropped (a split is a local rebuild); freed data blocks
    go on the free list.  The leaf-order table is respliced so scans stay
    correct even though new blocks break physical adjacency.
    """
    leaf = index.nodes[slot]
    cfg = index.config
    pos = index.leaf_position(slot)
    new_leaf_slots: list[int] = []

    if leaf.kind == NodeType.EXTERNAL_LEAF:
        store = index.external
        ks = np.asarray(store.keys[leaf.start : leaf.start + leaf.size])
        _split_external(index, slot, leaf, ks, cfg, new_leaf_slots)
    else:
        sl = slice(leaf.start, leaf.start + leaf.capacity)
        kall = np.asarray(index.data.keys[sl])
        mask = (kall == kall) & ~np.asarray(index.data.dead[sl], dtype=bool)
        ks = kall[mask]
        vs = np.asarray(index.data.values[sl])[mask]
        old_start, old_cap = leaf.start, leaf.capacity
        # if dropping tombstones frees plenty of room, rebuilding one leaf
        # already makes progress; otherwise a subtree is mandatory
        force_inner = len(ks) > cfg.max_capacity // 2
        _split_build(index, slot, ks, vs, leaf.kind, cfg, new_leaf_slots,
                     force_inner=force_inner)
        index.data.free(old_start, old_cap)

    index.replace_leaf_order(pos, new_leaf_slots)


def _split_build(index, slot, ks, vs, kind, cfg, out_slots, force_inner=False):
    """Build a local subtree over (ks, vs) rooted at ``slot``."""
    n = len(ks)
    if n <= cfg.max_capacity and not force_inner:
        index.nodes[slot] = _fresh_leaf(index.data, ks, vs, kind, cfg)
        out_slots.append(slot)
        return
    model = greedy_select(ks, cfg, p_mass=n / max(index.n_live, 1))
    start = len(index.nodes)
    index.nodes.extend([None] * model.c)
    model.start = start
    index.nodes[slot] = model
    bounds = np.searchsorted(model.predict_array(ks), np.arange(model.c + 1))
    for j in range(model.c):
        lo, hi = int(bounds[j]), int(bounds[j + 1])
        _split_build(index, start + j, ks[lo:hi], vs[lo:hi], kind, cfg, out_slots)


def _fresh_leaf(data, ks, vs, kind, cfg):
    n = len(ks)
    if kind == NodeType.GAPPED_LEAF and n > 0:
        cap = min(max(int(math.ceil(n / (1.0 - cfg.gap_density))), n + 1),
                  2 * n, cfg.max_capacity)
        if cap > n:
            leaf = GappedLeaf()
            leaf.size = n
            leaf.capacity = cap
            leaf.start = data.allocate(cap)
            positions = spread_positions(n, cap)
            sk, sv = _stage_block(cap, positions, ks, vs)
            data.write_block(leaf.start, sk, sv)
            (leaf.anchor, leaf.slope, leaf.intercept,
             leaf.error, leaf.p_hit) = _fit_positions(ks, positions, cap)
            leaf.refresh_hot()
            return leaf
    leaf = ArrayLeaf()
    leaf.size = n
    leaf.capacity = n
    if n:
        leaf.start = data.allocate(n)
        data.write_block(leaf.start, ks, vs)
    (leaf.anchor, leaf.slope, leaf.intercept,
     leaf.error, leaf.p_hit) = _fit_positions(ks, np.arange(n), max(n, 1))
    leaf.refresh_hot()
    return leaf


def _split_external(index, slot, leaf, ks, cfg, out_slots):
    n = len(ks)
    if n <= cfg.max_capacity:
        index.nodes[slot] = build_external_leaf(index.external, leaf.start, n)
        out_slots.append(slot)
        return
    model = greedy_select(ks, cfg, p_mass=n / max(index.n_live, 1))
    start = len(index.nodes)
    index.nodes.extend([None] * model.c)
    model.start = start
    index.nodes[slot] = model
    bounds = np.searchsorted(model.predict_array(ks), np.arange(model.c + 1))
    for j in range(model.c):
        lo, hi = int(bounds[j]), int(bounds[j + 1])
        child = ExternalLeaf()
        child.start = leaf.start + lo
        child.size = hi - lo
        child.capacity = hi - lo
        child.refresh_hot()
        _split_external_leafify(index, start + j, child, cfg, out_slots)


def _split_external_leafify(index, slot, child, cfg, out_slots):
    store = index.external
    if child.size > cfg.max_capacity:
        ks = store.keys[child.start : child.start + child.size]
        _split_external(index, slot, child, ks, cfg, out_slots)
        return
    index.nodes[slot] = build_external_leaf(store, child.start, child.size)
    out_slots.append(slot)
