"""PGM/PPM reader-writer: roundtrips, header quirks, corruption errors."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdcnet.data import pnm


def test_pgm8_roundtrip(tmp_path):
    img = np.arange(20, dtype=np.uint8).reshape(4, 5)
    p = tmp_path / "a.pgm"
    pnm.write_pgm(p, img)
    np.testing.assert_array_equal(pnm.read_pgm(p), img)


def test_pgm16_roundtrip_and_byte_order(tmp_path):
    img = np.array([[258, 0], [65535, 1]], dtype=np.uint16)
    p = tmp_path / "a.pgm"
    pnm.write_pgm(p, img)
    back = pnm.read_pgm(p)
    assert back.dtype == np.uint16
    np.testing.assert_array_equal(back, img)
    payload = p.read_bytes().split(b"65535\n", 1)[1]
    assert payload[:2] == b"\x01\x02"  # 258 big-endian: MSB first


def test_ppm_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (3, 4, 3), dtype=np.uint8)
    p = tmp_path / "a.ppm"
    pnm.write_ppm(p, img)
    np.testing.assert_array_equal(pnm.read_ppm(p), img)


@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 8), st.integers(1, 8))
@settings(max_examples=30, deadline=None)
def test_pgm16_roundtrip_random(seed, h, w):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 65536, (h, w), dtype=np.uint16)
    import tempfile, os

    fd, path = tempfile.mkstemp(suffix=".pgm")
    os.close(fd)
    try:
        pnm.write_pgm(path, img)
        np.testing.assert_array_equal(pnm.read_pgm(path), img)
    finally:
        os.unlink(path)


def test_header_comments_are_skipped(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 2\n# another\n255\n\x01\x02\x03\x04")
    np.testing.assert_array_equal(pnm.read_pgm(p), [[1, 2], [3, 4]])


def test_single_whitespace_before_payload(tmp_path):
    # payload starting with a whitespace-valued byte must survive
    img = np.array([[0x09, 0x0A], [0x20, 0x0D]], dtype=np.uint8)
    p = tmp_path / "w.pgm"
    pnm.write_pgm(p, img)
    np.testing.assert_array_equal(pnm.read_pgm(p), img)


def test_truncated_payload_raises(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n4 4\n255\n\x01\x02")
    with pytest.raises(ValueError, match="truncat|short|expected"):
        pnm.read_pgm(p)


def test_wrong_magic_raises(tmp_path):
    p = tmp_path / "m.pgm"
    p.write_bytes(b"P4\n2 2\n255\n\x00\x00\x00\x00")
    with pytest.raises(ValueError):
        pnm.read_pgm(p)


def test_ppm_refuses_16bit(tmp_path):
    p = tmp_path / "x.ppm"
    p.write_bytes(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")
    with pytest.raises(ValueError):
        pnm.read_ppm(p)


def test_write_pgm_rejects_bad_dtype(tmp_path):
    with pytest.raises((ValueError, TypeError)):
        pnm.write_pgm(tmp_path / "f.pgm", np.ones((2, 2), np.float32))


def test_error_map_scaling(tmp_path):
    pred = np.zeros((10, 10), np.float32)
    gt = np.zeros((10, 10), np.float32)
    gt[0, 0] = 1.0  # error 1.0 at one pixel, 0 elsewhere
    mask = np.ones((10, 10), bool)
    mask[-1, :] = False
    p = tmp_path / "e.pgm"
    pnm.write_error_map(p, pred, gt, mask)
    img = pnm.read_pgm(p)
    assert img.dtype == np.uint8
    assert img[0, 0] == 255  # the p99 pixel saturates
    assert (img[-1, :] == 0).all()  # outside mask painted black


def test_error_map_zero_error_all_black(tmp_path):
    z = np.ones((4, 4), np.float32)
    p = tmp_path / "z.pgm"
    pnm.write_error_map(p, z, z, np.ones((4, 4), bool))
    assert (pnm.read_pgm(p) == 0).all()
