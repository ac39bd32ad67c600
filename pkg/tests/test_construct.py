import math

import numpy as np
import pytest

from carmi import build_index
from carmi.construct import (
    Builder,
    BuildConfig,
    TrainingWorkload,
    construct_dp,
    construct_leaf_optimal,
    default_training_workload,
    greedy_select,
    kind_fanouts,
    load_config,
    partition,
)
from carmi.core import CarmiError, NoViableCandidate, TooLarge
from carmi.cost import tree_objective
from carmi.inner import train_bs, train_lr
from oracles import brute_force_objective


def uniform_keys(n, seed=0):
    return np.unique(np.random.default_rng(seed).uniform(0, 1e8, n))


def tiny_config(**kw):
    base = dict(
        lam=1e-7,
        leaf_threshold=8,
        algorithm_threshold=1 << 20,
        max_capacity=64,
        fanout_candidates=(2, 3),
        inner_kinds=("lr", "bs"),
        root_variants=("lr", "bs"),
        leaf_kinds=("array", "gapped"),
    )
    base.update(kw)
    return BuildConfig(**base)


# -- partition ------------------------------------------------------------------

def test_partition_single_branch():
    keys = uniform_keys(100)
    model = train_bs(keys, 1)
    assert partition(keys, model) == [(0, 100)]


def test_partition_bs_balanced():
    keys = uniform_keys(101, seed=2)
    model = train_bs(keys, 4)
    ranges = partition(keys, model)
    sizes = [hi - lo for lo, hi in ranges]
    assert max(sizes) - min(sizes) <= 1
    assert ranges[0][0] == 0 and ranges[-1][1] == len(keys)
    # concatenating the ranges reproduces the input order
    rebuilt = np.concatenate([keys[lo:hi] for lo, hi in ranges])
    assert np.array_equal(rebuilt, keys)


# -- leaf choice ------------------------------------------------------------------

def test_leaf_optimal_read_only_prefers_array():
    keys = uniform_keys(400, seed=3)
    wl = default_training_workload(keys)
    plan, cost = construct_leaf_optimal(keys, wl, BuildConfig())
    assert plan.kind == "array"
    assert cost == plan.cost


def test_leaf_optimal_write_heavy_prefers_gapped():
    keys = uniform_keys(400, seed=3)
    wl = default_training_workload(keys, read_ratio=0.5, seed=1)
    plan, _ = construct_leaf_optimal(keys, wl, BuildConfig())
    assert plan.kind == "gapped"
    assert plan.capacity > len(keys)


def test_leaf_optimal_empty():
    wl = default_training_workload(np.empty(0))
    plan, cost = construct_leaf_optimal(np.empty(0), wl, BuildConfig())
    assert plan.kind == "array" and plan.capacity == 0


def test_leaf_optimal_too_large():
    keys = uniform_keys(5000, seed=4)
    wl = default_training_workload(keys)
    with pytest.raises(TooLarge):
        construct_leaf_optimal(keys, wl, BuildConfig())


# -- dynamic program ----------------------------------------------------------------

def test_dp_below_threshold_is_single_leaf():
    keys = uniform_keys(8, seed=5)
    wl = default_training_workload(keys)
    plan, _ = construct_dp(keys, wl, tiny_config(leaf_threshold=16))
    assert plan.is_leaf


def test_dp_matches_bruteforce_small():
    rng = np.random.default_rng(0)
    for trial in range(25):
        n = int(rng.integers(2, 65))
        keys = np.unique(rng.uniform(0, 1e8, n))
        ratio = float(rng.choice([1.0, 0.5, 0.9]))
        wl = default_training_workload(keys, ratio, seed=trial)
        cfg = tiny_config()
        b = Builder(keys, np.zeros(len(keys)), wl, cfg)
        plan = b.dp(0, len(keys), 0, len(b.rk), 0, len(b.ik))
        expect = brute_force_objective(
            Builder(keys, np.zeros(len(keys)), wl, cfg),
            0, len(keys), 0, len(wl.read_keys), 0, len(wl.insert_keys))
        assert plan.cost == expect  # bitwise, same summation order


def test_memo_soundness():
    keys = uniform_keys(60, seed=6)
    wl = default_training_workload(keys, 0.8, seed=2)
    cfg = tiny_config()
    memo = {}
    plan1, cost1 = construct_dp(keys, wl, cfg, memo)
    assert len(memo) > 0
    plan2, cost2 = construct_dp(keys, wl, cfg, memo)   # pure memo hit
    assert cost2 == cost1
    plan3, cost3 = construct_dp(keys, wl, cfg, {})     # cleared memo
    assert cost3 == cost1


# -- greedy selection -----------------------------------------------------------------

def test_greedy_uniform_lambda_zero_prefers_lr_max_fanout():
    keys = uniform_keys(20000, seed=7)
    cfg = BuildConfig(lam=0.0)
    model = greedy_select(keys, cfg)
    assert model.kind.name == "LR_INNER"
    assert model.c == 16


def test_greedy_huge_lambda_prefers_small_fanout():
    keys = uniform_keys(20000, seed=7)
    cfg = BuildConfig(lam=1e3)
    model = greedy_select(keys, cfg)
    assert model.c == min(kind_fanouts(model.kind.name.split("_")[0].lower(), cfg))


def test_greedy_degenerate_falls_back_to_bs2():
    # all keys in a razor-thin cluster except one outlier: most candidates
    # route everything to one branch
    keys = np.sort(np.concatenate([[0.0], 1e8 + np.arange(1, 50, dtype=float)]))
    cfg = BuildConfig(inner_kinds=("lr",), fanout_candidates=(2,))
    model = greedy_select(keys, cfg)
    sizes = np.bincount(model.predict_array(keys), minlength=model.c)
    assert np.count_nonzero(sizes) >= 2
    with pytest.raises(NoViableCandidate):
        greedy_select(np.array([1.0]), cfg)


# -- training workload -----------------------------------------------------------------

def test_training_workload_ratios():
    keys = uniform_keys(1000, seed=8)
    ro = default_training_workload(keys, 1.0)
    assert len(ro.insert_keys) == 0
    half = default_training_workload(keys, 0.5)
    assert len(half.insert_keys) == len(keys)
    assert half.mass == 2 * len(keys)


def test_training_workload_write_partial_band():
    keys = uniform_keys(1000, seed=9)
    lo, hi = keys[600], keys[900]
    wl = default_training_workload(keys, 0.85, insert_region=(lo, hi), seed=3)
    assert len(wl.insert_keys) == round(1000 * 0.15 / 0.85)
    assert wl.insert_keys.min() >= lo and wl.insert_keys.max() <= hi


# -- whole builds -------------------------------------------------------------------

def test_build_answers_every_key():
    keys = uniform_keys(1 << 16, seed=10)
    index, _ = build_index(keys, keys + 0.5)
    for k in keys[:: 257]:
        assert index.find(float(k)) == float(k) + 0.5
    index.validate()


def test_build_deterministic():
    keys = uniform_keys(6000, seed=11)
    wl = default_training_workload(keys, 0.7, seed=4)
    a, ca = build_index(keys, keys, wl)
    b, cb = build_index(keys, keys, wl)
    assert a.encoded_nodes() == b.encoded_nodes()  # byte-identical node arrays
    assert ca.objective == cb.objective


def test_uniform_read_only_depth2():
    keys = uniform_keys(1 << 16, seed=12)
    index, _ = build_index(keys, keys)
    st = index.stats()
    assert st.depth == 2
    assert st.gapped_leaf == 0


def test_decomposition_identity():
    # objective(tree) = root terms + sum of child objectives
    keys = uniform_keys(3000, seed=13)
    wl = default_training_workload(keys, 0.6, seed=5)
    cfg = BuildConfig(lam=1e-6)
    index, breakdown = build_index(keys, keys, wl, cfg)
    b = Builder(keys, keys, wl, cfg)
    root = index.root
    kb, rb, ib = b._route(root, 0, len(keys), 0, len(b.rk), 0, len(b.ik))
    total = 0.0
    from carmi.cost import root_tcost

    for j in range(root.c):
        sub = b.dp(kb[j], kb[j + 1], rb[j], rb[j + 1], ib[j], ib[j + 1])
        total += sub.cost
    total += root_tcost(root.variant, root.c, cfg.constants) \
        + cfg.lam * root.space_bytes()
    assert breakdown.objective == pytest.approx(total, rel=1e-9)


def test_lambda_monotone_dp_scale():
    keys = uniform_keys(1 << 12, seed=14)
    wl = default_training_workload(keys, 0.5, seed=6)
    spaces, times = [], []
    for lam in (1e-6, 1e-4, 1e-2):
        index, breakdown = build_index(keys, keys, wl, BuildConfig(lam=lam))
        spaces.append(breakdown.space_bytes)
        times.append(breakdown.time_ns)
    assert spaces == sorted(spaces, reverse=True)
    assert times == sorted(times)


def test_split_preserves_keys_and_scan_order():
    keys = uniform_keys(3000, seed=15)
    wl = default_training_workload(keys, 0.5, seed=7)
    cfg = BuildConfig(max_capacity=1024, leaf_threshold=256, algorithm_threshold=1024)
    index, _ = build_index(keys, keys, wl, cfg)
    rng = np.random.default_rng(16)
    extra = np.unique(rng.uniform(0, 1e8, 6000))
    extra = extra[~np.isin(extra, keys)]
    for k in extra:
        index.insert(float(k), float(k))
    index.validate()
    allk = np.sort(np.concatenate([keys, extra]))
    got = [k for k, _ in index.range_scan(float(allk[0]), len(allk))]
    assert np.array_equal(np.asarray(got), allk)


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "carmi.conf"
    path.write_text(
        "lambda = 5e-7\nkLeafThreshold=512\nkAlgorithmThreshold = 2048\n"
        "kMaxCapacity=2048\nfanout_candidates = 4,8\ninner_kinds = lr,bs\n"
        "inner_lr_ns = 80\n")
    cfg = load_config(path)
    assert cfg.lam == 5e-7
    assert cfg.leaf_threshold == 512
    assert cfg.algorithm_threshold == 2048
    assert cfg.fanout_candidates == (4, 8)
    assert cfg.inner_kinds == ("lr", "bs")
    assert cfg.constants.inner_lr_ns == 80.0
    bad = tmp_path / "bad.conf"
    bad.write_text("no_such_key = 3\n")
    with pytest.raises(CarmiError):
        load_config(bad)


def test_invalid_config_combinations():
    with pytest.raises(CarmiError):
        BuildConfig(lam=-1.0)
    with pytest.raises(CarmiError):
        BuildConfig(leaf_threshold=8192)  # above the algorithm threshold
