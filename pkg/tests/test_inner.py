import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carmi.core import EmptyInput, FanoutTooLarge
from carmi.inner import (
    BSInner,
    HisInner,
    LRInner,
    PLRInner,
    predict,
    train_bs,
    train_his,
    train_lr,
    train_plr,
    train_root,
)

TRAINERS = {
    "lr": train_lr,
    "plr": train_plr,
    "his": train_his,
    "bs": train_bs,
}


def uniform(n, lo=0.0, hi=1.0, seed=0):
    return np.unique(np.random.default_rng(seed).uniform(lo, hi, n))


# -- per-model examples -------------------------------------------------------

def test_lr_extremes_clamp():
    keys = np.arange(1000) / 1000.0
    m = train_lr(keys, 4)
    assert m.predict(keys[0]) == 0
    assert m.predict(keys[-1]) == 3


def test_lr_single_key():
    m = train_lr(np.array([7.5]), 9)
    b = m.predict(7.5)
    assert 0 <= b <= 8
    assert m.predict(-1e9) == m.predict(7.5) == m.predict(1e9) == b


def test_lr_uniform_midpoint():
    # perfectly linear data: the fit maps key 0.5 onto branch floor(0.5*c)
    keys = np.arange(10000) / 10000.0
    m = train_lr(keys, 4)
    assert m.predict(0.5) == 2


def test_lr_empty_input():
    with pytest.raises(EmptyInput):
        train_lr(np.empty(0), 4)


def test_plr_uniform_median():
    keys = uniform(7001, seed=1)
    m = train_plr(keys, 7)
    # independently derive the knots: c-quantile cut keys carrying counts 0..c
    from carmi.inner import _f32_floor

    n = len(keys)
    ranks = [min(j * n // 7, n - 1) for j in range(8)]
    assert m.knot_keys == [_f32_floor(float(keys[r])) for r in ranks]
    assert m.knot_idx == list(range(8))
    median = float(keys[(n - 1) // 2])
    assert m.predict(median) == 3


def test_plr_single_key_constant():
    m = train_plr(np.array([3.0]), 5)
    assert m.predict(2.9) == m.predict(3.0) == m.predict(3.1)


def test_plr_two_clusters():
    keys = np.sort(np.concatenate([
        1.0 + np.arange(50) * 1e-6, 9.0 + np.arange(50) * 1e-6]))
    m = train_plr(keys, 2)
    for k in keys:  # brute-force check over the whole sample
        assert m.predict(float(k)) == (0 if k < 5.0 else 1)


def test_his_all_equal_keys():
    m = train_his(np.array([4.2]), 1)
    assert m.base == [0] * 10
    assert m.offset == [0] * 10
    assert m.predict(4.2) == 0


def test_his_clamps_and_fanout_cap():
    keys = uniform(5000, seed=2)
    m = train_his(keys, 16)
    assert m.predict(float(keys[0])) == 0
    assert m.predict(float(keys[-1])) == 15
    with pytest.raises(FanoutTooLarge):
        train_his(keys, 17)


def test_his_uniform_halfway():
    keys = np.arange(160.0)  # exactly one key per bucket on [0, 160)
    m = train_his(keys, 16)
    # brute-force the rank table: key 80 has rank 81 of 160 -> branch 8
    assert m.predict(80.0) == 8


def test_his_encoding_faithful():
    for seed in range(20):
        keys = np.unique(np.random.default_rng(seed).lognormal(0, 1, 400))
        m = train_his(keys, 16)
        clone = HisInner.from_params(m.params_bytes(), m.c)
        assert clone.table == m.table  # bit-for-bit table reconstruction
        assert clone.base == m.base and clone.offset == m.offset


def test_his_increment_cap():
    # all mass at the top bucket: increments must still be 0/1
    keys = np.sort(np.concatenate([[0.0], 159.5 + np.arange(100) * 1e-4]))
    m = train_his(keys, 16)
    diffs = np.diff(m.table)
    assert diffs.min() >= 0 and diffs.max() <= 1


def test_bs_identity_partition():
    keys = np.arange(1, 16.0)
    m = train_bs(keys, 15)
    for k in keys:  # brute force all 15 keys
        assert m.predict(float(k)) == int(k) - 1


def test_bs_c1_and_extremes():
    keys = uniform(100, seed=3)
    m1 = train_bs(keys, 1)
    assert m1.predict(float(keys[50])) == 0
    m = train_bs(keys, 8)
    assert m.predict(float(keys[0]) - 1.0) == 0
    assert m.predict(float(keys[-1]) + 1.0) == 7
    with pytest.raises(FanoutTooLarge):
        train_bs(keys, 16)


def test_bs_balance():
    for c in (2, 3, 7, 15):
        keys = uniform(1000, seed=c)
        m = train_bs(keys, c)
        sizes = np.bincount(m.predict_array(keys), minlength=c)
        assert sizes.max() - sizes.min() <= 1


# -- cross-model properties ----------------------------------------------------

ALL_KINDS = ("lr", "plr", "his", "bs")


def _fanout(kind, c):
    return min(c, {"lr": 1 << 20, "plr": 1 << 15, "his": 16, "bs": 15}[kind])


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_below_min_maps_to_zero(kind):
    keys = uniform(500, seed=7)
    m = TRAINERS[kind](keys, _fanout(kind, 8))
    assert m.predict(float(keys[0]) - 1e6) == 0


@settings(max_examples=60, deadline=None)
@given(
    kind=st.sampled_from(ALL_KINDS),
    c=st.integers(1, 16),
    seed=st.integers(0, 10_000),
    n=st.integers(1, 300),
)
def test_monotone_and_in_range(kind, c, seed, n):
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.integers(-6, 9)
    keys = np.unique(rng.uniform(0, 1, n) * scale + rng.uniform(-scale, scale))
    c = _fanout(kind, c)
    m = TRAINERS[kind](keys, c)
    probes = np.sort(np.concatenate([
        keys, rng.uniform(keys[0] - scale, keys[-1] + scale, 64)]))
    preds = [m.predict(float(k)) for k in probes]
    assert all(0 <= p <= c - 1 for p in preds)
    assert all(a <= b for a, b in zip(preds, preds[1:]))
    # vectorized perfectly mirrors scalar routing
    assert np.array_equal(m.predict_array(probes), np.asarray(preds))


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(ALL_KINDS), seed=st.integers(0, 10_000))
def test_partition_contiguity(kind, seed):
    rng = np.random.default_rng(seed)
    keys = np.unique(rng.lognormal(0, 2, 400))
    c = _fanout(kind, 9)
    m = TRAINERS[kind](keys, c)
    labels = m.predict_array(keys)
    assert np.all(np.diff(labels) >= 0)  # each branch gets a contiguous run


def test_params_fit_56_bytes_and_roundtrip():
    keys = uniform(700, seed=9)
    for kind, cls in (("lr", LRInner), ("plr", PLRInner), ("his", HisInner),
                      ("bs", BSInner)):
        m = TRAINERS[kind](keys, _fanout(kind, 12))
        blob = m.params_bytes()
        assert len(blob) == 56
        clone = cls.from_params(blob, m.c)
        assert clone.params_bytes() == blob
        for k in keys[::13]:
            assert clone.predict(float(k)) == m.predict(float(k))


# -- roots ----------------------------------------------------------------------

def test_root_lr_spread_uniform():
    # scaled-down version of the 65536-child root: keep keys-per-branch at
    # the same ~1024 so load fluctuations stay proportional
    keys = uniform(1 << 17, seed=11)
    c = len(keys) // 1024
    root = train_root(keys, "lr", c)
    sizes = np.bincount(root.predict_array(keys), minlength=c)
    assert sizes.max() <= 2 * (len(keys) / c)


def test_root_bs_median_boundary():
    keys = uniform(1000, seed=12)
    root = train_root(keys, "bs", 2)
    assert root.bounds == [float(keys[500])]
    assert root.predict(float(keys[0])) == 0
    assert root.predict(float(keys[-1])) == 1


def test_root_his_c1():
    keys = uniform(100, seed=13)
    root = train_root(keys, "his", 1)
    assert all(root.predict(float(k)) == 0 for k in keys[::7])


@pytest.mark.parametrize("variant", ("lr", "plr", "his", "bs"))
def test_root_monotone(variant):
    keys = np.unique(np.random.default_rng(17).lognormal(0, 1, 3000))
    root = train_root(keys, variant, 64)
    probes = np.sort(np.random.default_rng(5).uniform(keys[0], keys[-1], 500))
    preds = root.predict_array(probes)
    assert np.all(np.diff(preds) >= 0)
    assert preds.min() >= 0 and preds.max() <= 63
    assert [root.predict(float(k)) for k in probes[::50]] == \
        list(preds[::50])


def test_predict_helper_dispatch():
    keys = uniform(64, seed=1)
    m = train_bs(keys, 4)
    assert predict(m, float(keys[10])) == m.predict(float(keys[10]))
