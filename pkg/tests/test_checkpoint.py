"""Checkpoint container: exact roundtrips and corruption diagnostics."""

import struct

import numpy as np
import pytest

from hdcnet.data.checkpoint import CheckpointError, load_checkpoint, save_checkpoint


def _tensors(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "enc.w": rng.standard_normal((4, 3, 2, 2)).astype(np.float32),
        "enc.b": rng.standard_normal(4).astype(np.float32),
        "scalarish": np.float32(1.5).reshape(()),
        "head": rng.standard_normal((1, 8)).astype(np.float32),
    }


def test_roundtrip_bit_exact(tmp_path):
    p = tmp_path / "m.ckpt"
    t = _tensors()
    cfg = {"lr": "0.001", "note": "free text with spaces", "future_key": "kept"}
    save_checkpoint(p, t, cfg)
    t2, cfg2 = load_checkpoint(p)
    assert list(t2) == list(t)
    for k in t:
        assert t2[k].dtype == np.float32
        assert t2[k].shape == t[k].shape
        np.testing.assert_array_equal(t2[k], t[k])
    assert cfg2 == cfg
    assert list(cfg2) == list(cfg)  # order preserved


def test_double_save_byte_identical(tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, _tensors(), {"k": "v"})
    save_checkpoint(b, _tensors(), {"k": "v"})
    assert a.read_bytes() == b.read_bytes()


def test_empty_checkpoint(tmp_path):
    p = tmp_path / "e.ckpt"
    save_checkpoint(p, {}, {})
    t, cfg = load_checkpoint(p)
    assert t == {} and cfg == {}


def test_noncontiguous_and_float64_inputs(tmp_path):
    p = tmp_path / "n.ckpt"
    base = np.arange(12, dtype=np.float64).reshape(3, 4)
    save_checkpoint(p, {"t": base.T}, {})
    t, _ = load_checkpoint(p)
    assert t["t"].dtype == np.float32
    np.testing.assert_array_equal(t["t"], base.T.astype(np.float32))


def test_flipped_payload_byte_names_tensor(tmp_path):
    p = tmp_path / "c.ckpt"
    save_checkpoint(p, _tensors(), {"k": "v"})
    buf = bytearray(p.read_bytes())
    buf[-1] ^= 0xFF  # lands in the last tensor's payload
    p.write_bytes(bytes(buf))
    with pytest.raises(CheckpointError, match="checksum mismatch.*'head'"):
        load_checkpoint(p)


def test_truncation_is_diagnosed(tmp_path):
    p = tmp_path / "t.ckpt"
    save_checkpoint(p, _tensors(), {})
    whole = p.read_bytes()
    p.write_bytes(whole[:-3])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(p)
    # cutting inside the header is reported too, not just inside payloads
    p.write_bytes(whole[:6])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(p)


def test_trailing_bytes_rejected(tmp_path):
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, _tensors(), {})
    p.write_bytes(p.read_bytes() + b"oops")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(p)


def test_bad_magic(tmp_path):
    p = tmp_path / "m.ckpt"
    save_checkpoint(p, _tensors(), {})
    buf = bytearray(p.read_bytes())
    buf[:4] = b"JUNK"
    p.write_bytes(bytes(buf))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(p)


def test_version_mismatch(tmp_path):
    p = tmp_path / "v.ckpt"
    save_checkpoint(p, _tensors(), {})
    buf = bytearray(p.read_bytes())
    buf[4:8] = struct.pack("<I", 99)
    p.write_bytes(bytes(buf))
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(p)


def test_unencodable_config_rejected(tmp_path):
    p = tmp_path / "bad.ckpt"
    with pytest.raises(CheckpointError, match="not encodable"):
        save_checkpoint(p, {}, {"a=b": "1"})
    with pytest.raises(CheckpointError, match="not encodable"):
        save_checkpoint(p, {}, {"a": "line1\nline2"})


def test_config_values_survive_equals_signs(tmp_path):
    # '=' is legal in values (split is on the first one only)
    p = tmp_path / "eq.ckpt"
    save_checkpoint(p, {}, {"expr": "a=b=c"})
    _, cfg = load_checkpoint(p)
    assert cfg == {"expr": "a=b=c"}
