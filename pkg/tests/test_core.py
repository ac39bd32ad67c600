import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carmi.core import (
    CarmiError,
    CountOverflow,
    DataArray,
    NodeRecord,
    NodeType,
    UnknownTag,
    allocate_children,
    allocate_data,
    decode_node,
    encode_node,
    NodeArray,
    read_snapshot,
    write_snapshot,
)


def test_encode_identity_case():
    rec = NodeRecord(NodeType.ARRAY_LEAF, 0, 0, bytes(56))
    block = encode_node(rec)
    assert len(block) == 64
    assert block[0] == int(NodeType.ARRAY_LEAF)
    assert block[1:] == bytes(63)


def test_encode_field_layout():
    rec = NodeRecord(NodeType.HIS_INNER, 0x030201, 0x0A0B0C0D, bytes(range(56)))
    block = encode_node(rec)
    assert block[0] == 3
    assert block[1:4] == bytes([0x01, 0x02, 0x03])        # little-endian 24-bit count
    assert block[4:8] == bytes([0x0D, 0x0C, 0x0B, 0x0A])  # little-endian 32-bit start
    assert block[8:] == bytes(range(56))


def test_count_overflow_boundary():
    ok = NodeRecord(NodeType.BS_INNER, (1 << 24) - 1, 0, bytes(56))
    assert decode_node(encode_node(ok)) == ok
    with pytest.raises(CountOverflow):
        encode_node(NodeRecord(NodeType.BS_INNER, 1 << 24, 0, bytes(56)))


def test_decode_rejects_unknown_tag_and_short_block():
    block = bytearray(encode_node(NodeRecord(NodeType.LR_INNER, 1, 0, bytes(56))))
    block[0] = 255
    with pytest.raises(UnknownTag):
        decode_node(bytes(block))
    with pytest.raises(CarmiError):
        decode_node(bytes(63))


@settings(max_examples=200, deadline=None)
@given(
    tag=st.sampled_from(list(NodeType)),
    count=st.integers(0, (1 << 24) - 1),
    start=st.integers(0, (1 << 32) - 1),
    params=st.binary(min_size=56, max_size=56),
)
def test_roundtrip_property(tag, count, start, params):
    rec = NodeRecord(tag, count, start, params)
    assert decode_node(encode_node(rec)) == rec


def test_allocate_children():
    arr = NodeArray()
    assert allocate_children(arr, 4) == 0
    assert len(arr) == 4
    assert allocate_children(arr, 2) == 4
    arr.records.extend([None] * 4)
    assert allocate_children(arr, 1) == 10
    with pytest.raises(CarmiError):
        allocate_children(arr, 0)


def test_allocate_data():
    data = DataArray()
    assert allocate_data(data, 8) == 0
    assert allocate_data(data, 4) == 8
    assert data.length == 12
    with pytest.raises(CarmiError):
        allocate_data(data, 0)


def test_data_free_list_reuse():
    data = DataArray()
    a = data.allocate(10)
    data.free(a, 10)
    b = data.allocate(6)  # first fit carves the freed block
    assert b == a
    c = data.allocate(4)
    assert c == a + 6
    assert data.length == 10


def test_slot_states():
    data = DataArray()
    start = data.allocate(3)
    data.keys[start] = 5.0
    data.values[start] = 7.0
    data.keys[start + 2] = 9.0
    data.dead[start + 2] = True
    assert data.slot(start).state == "occupied"
    assert data.slot(start).entry.value == 7.0
    assert data.slot(start + 1).state == "gap"
    assert data.slot(start + 2).state == "tombstone"
    assert data.slot(start + 2).entry.key == 9.0


def test_snapshot_roundtrip(tmp_path):
    recs = [
        NodeRecord(NodeType.LR_INNER, 3, 1, bytes(56)),
        NodeRecord(NodeType.GAPPED_LEAF, 8, 0, bytes(range(56))),
    ]
    keys = np.array([1.0, math.nan, 2.0])
    vals = np.array([10.0, 0.0, 20.0])
    path = tmp_path / "snap.bin"
    write_snapshot(path, recs, keys, vals)
    raw = path.read_bytes()
    assert raw[:8] == b"CARMIIDX"
    r2, k2, v2 = read_snapshot(path)
    assert r2 == recs
    assert np.array_equal(v2, vals)
    assert k2[0] == 1.0 and k2[2] == 2.0 and math.isnan(k2[1])
    # byte-identical re-dump
    path2 = tmp_path / "snap2.bin"
    write_snapshot(path2, r2, k2, v2)
    assert path2.read_bytes() == raw
