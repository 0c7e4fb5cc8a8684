"""Checkpoint format tests: bit-exact round trips and corruption reporting."""

import struct

import numpy as np
import pytest

from sgen import (
    CheckpointError,
    ParamStore,
    SgenConfig,
    Tensor,
    build_generator,
    load_checkpoint,
    save_checkpoint,
)
from sgen.checkpoint import MAGIC


def _tiny_store(rng):
    store = ParamStore()
    store.add("alpha.weight", Tensor(rng.normal(size=(2, 3, 3, 3)).astype(np.float32)))
    store.add("alpha.bias", Tensor(np.zeros((1, 2, 1, 1), dtype=np.float32)))
    store.add("beta", Tensor(rng.normal(size=(1, 1, 4, 4)).astype(np.float32)))
    return store


def _assert_same(a: ParamStore, b: ParamStore):
    assert a.names() == b.names()
    for name in a.names():
        assert a[name].data.tobytes() == b[name].data.tobytes(), name


# ---------------------------------------------------------------------------
# round trips


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    store = _tiny_store(rng)
    path = tmp_path / "tiny.ckpt"
    save_checkpoint(store, path)
    _assert_same(store, load_checkpoint(path))


def test_round_trip_survives_awkward_float_values(tmp_path):
    store = ParamStore()
    vals = np.array(
        [0.0, -0.0, 1e-38, -1e38, np.float32(1 / 3), np.pi, 2**-24, 65504.0],
        dtype=np.float32,
    ).reshape(1, 1, 2, 4)
    store.add("edge", Tensor(vals))
    path = tmp_path / "edge.ckpt"
    save_checkpoint(store, path)
    _assert_same(store, load_checkpoint(path))


def test_loaded_tensors_are_trainable_leaves(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "leaves.ckpt"
    save_checkpoint(_tiny_store(rng), path)
    loaded = load_checkpoint(path)
    assert all(t.requires_grad for t in loaded.tensors())
    assert all(t.grad is None for t in loaded.tensors())


def test_generator_round_trip_preserves_name_order(tmp_path):
    cfg = SgenConfig(n_levels=2, base_channels=4, bottleneck_channels=4)
    store = build_generator(cfg, np.random.default_rng(2))
    path = tmp_path / "gen.ckpt"
    save_checkpoint(store, path)
    _assert_same(store, load_checkpoint(path))


def test_empty_store_round_trips(tmp_path):
    path = tmp_path / "empty.ckpt"
    save_checkpoint(ParamStore(), path)
    assert len(load_checkpoint(path)) == 0


def test_save_is_deterministic(tmp_path):
    rng = np.random.default_rng(3)
    store = _tiny_store(rng)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(store, p1)
    save_checkpoint(store, p2)
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# corruption diagnostics


def _saved_blob(tmp_path, rng):
    path = tmp_path / "base.ckpt"
    save_checkpoint(_tiny_store(rng), path)
    return path, bytearray(path.read_bytes())


def test_bad_magic_is_rejected(tmp_path):
    rng = np.random.default_rng(4)
    path, blob = _saved_blob(tmp_path, rng)
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_unsupported_version_is_rejected(tmp_path):
    rng = np.random.default_rng(5)
    path, blob = _saved_blob(tmp_path, rng)
    blob[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(path)


def test_truncation_names_entry_and_offset(tmp_path):
    rng = np.random.default_rng(6)
    path, blob = _saved_blob(tmp_path, rng)
    path.write_bytes(bytes(blob[: len(blob) // 2]))
    with pytest.raises(CheckpointError, match="truncated at byte") as exc:
        load_checkpoint(path)
    # the diagnostic names what it was reading when the data ran out
    assert "alpha" in str(exc.value) or "entry" in str(exc.value)


def test_truncated_header_is_rejected(tmp_path):
    path = tmp_path / "stub.ckpt"
    path.write_bytes(MAGIC + b"\x01")
    with pytest.raises(CheckpointError, match="header"):
        load_checkpoint(path)


def test_implausible_name_length_is_rejected(tmp_path):
    rng = np.random.default_rng(7)
    path, blob = _saved_blob(tmp_path, rng)
    head = len(MAGIC) + 8
    blob[head : head + 4] = struct.pack("<I", 2**31)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="implausible name length"):
        load_checkpoint(path)


def test_non_utf8_name_is_rejected(tmp_path):
    rng = np.random.default_rng(8)
    path, blob = _saved_blob(tmp_path, rng)
    head = len(MAGIC) + 8
    blob[head + 4] = 0xFF  # first name byte
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="not UTF-8"):
        load_checkpoint(path)


def test_trailing_bytes_are_rejected(tmp_path):
    rng = np.random.default_rng(9)
    path, blob = _saved_blob(tmp_path, rng)
    path.write_bytes(bytes(blob) + b"\x00\x00\x00")
    with pytest.raises(CheckpointError, match="3 trailing bytes"):
        load_checkpoint(path)


def test_oversized_dims_are_reported_as_truncation(tmp_path):
    rng = np.random.default_rng(10)
    path = tmp_path / "dims.ckpt"
    store = ParamStore()
    store.add("w", Tensor(np.ones((1, 1, 2, 2), dtype=np.float32)))
    save_checkpoint(store, path)
    blob = bytearray(path.read_bytes())
    dims_off = len(MAGIC) + 8 + 4 + 1  # header, name length, name "w"
    blob[dims_off : dims_off + 16] = struct.pack("<4I", 1, 1, 1000, 1000)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match=r"entry 'w' data") as exc:
        load_checkpoint(path)
    assert "truncated" in str(exc.value)
