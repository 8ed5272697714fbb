"""Binary PNM readers and writers.

PGM (P5) carries single-channel data at 8 bits (maxval <= 255) or
16 bits big-endian (maxval <= 65535); PPM (P6) carries 8-bit RGB.
Headers may contain '#' comments between tokens.
"""

from __future__ import annotations

import numpy as np


def _read_tokens(buf: bytes, n: int):
    """Yield the first n whitespace-separated header tokens after the
    magic, skipping '#' comments, and return (tokens, payload_offset)."""
    tokens = []
    i = 0
    while len(tokens) < n:
        if i >= len(buf):
            raise ValueError("truncated PNM header")
        c = buf[i : i + 1]
        if c in b" \t\r\n":
            i += 1
        elif c == b"#":
            j = buf.find(b"\n", i)
            if j < 0:
                raise ValueError("truncated PNM header")
            i = j + 1
        else:
            j = i
            while j < len(buf) and buf[j : j + 1] not in b" \t\r\n":
                j += 1
            tokens.append(buf[i:j])
            i = j
    # exactly one whitespace byte separates the header from the payload
    if i >= len(buf) or buf[i : i + 1] not in b" \t\r\n":
        raise ValueError("malformed PNM header")
    return tokens, i + 1


def _parse_header(buf: bytes, magic: bytes, path: str):
    if not buf.startswith(magic):
        raise ValueError(f"{path}: expected {magic.decode()} magic")
    tokens, off = _read_tokens(buf[len(magic) :], 3)
    w, h, maxval = (int(t) for t in tokens)
    if w <= 0 or h <= 0:
        raise ValueError(f"{path}: bad dimensions {w}x{h}")
    if not 0 < maxval <= 65535:
        raise ValueError(f"{path}: bad maxval {maxval}")
    return w, h, maxval, len(magic) + off


def read_pgm(path) -> np.ndarray:
    """Read a P5 file.  Returns uint8 [H,W] for maxval <= 255, else
    uint16 [H,W] decoded big-endian."""
    path = str(path)
    with open(path, "rb") as f:
        buf = f.read()
    w, h, maxval, off = _parse_header(buf, b"P5", path)
    if maxval <= 255:
        need = w * h
        raw = np.frombuffer(buf, dtype=np.uint8, count=-1, offset=off)
        if raw.size < need:
            raise ValueError(f"{path}: payload truncated ({raw.size} < {need} bytes)")
        return raw[:need].reshape(h, w).copy()
    need = w * h
    raw = buf[off:]
    if len(raw) < 2 * need:
        raise ValueError(f"{path}: payload truncated ({len(raw)} < {2 * need} bytes)")
    return np.frombuffer(raw, dtype=">u2", count=need).astype(np.uint16).reshape(h, w)


def read_ppm(path) -> np.ndarray:
    """Read a P6 file with maxval <= 255.  Returns uint8 [H,W,3]."""
    path = str(path)
    with open(path, "rb") as f:
        buf = f.read()
    w, h, maxval, off = _parse_header(buf, b"P6", path)
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PPM not supported")
    need = w * h * 3
    raw = np.frombuffer(buf, dtype=np.uint8, count=-1, offset=off)
    if raw.size < need:
        raise ValueError(f"{path}: payload truncated ({raw.size} < {need} bytes)")
    return raw[:need].reshape(h, w, 3).copy()


def write_pgm(path, img: np.ndarray) -> None:
    """Write uint8 or uint16 [H,W] as P5 (16-bit goes big-endian,
    maxval 65535)."""
    if img.ndim != 2:
        raise ValueError(f"PGM wants [H,W], got {img.shape}")
    h, w = img.shape
    if img.dtype == np.uint8:
        header = f"P5\n{w} {h}\n255\n".encode()
        payload = img.tobytes()
    elif img.dtype == np.uint16:
        header = f"P5\n{w} {h}\n65535\n".encode()
        payload = img.astype(">u2").tobytes()
    else:
        raise ValueError(f"PGM wants uint8 or uint16, got {img.dtype}")
    with open(str(path), "wb") as f:
        f.write(header + payload)


def write_ppm(path, img: np.ndarray) -> None:
    """Write uint8 [H,W,3] as P6."""
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"PPM wants uint8 [H,W,3], got {img.dtype} {img.shape}")
    h, w = img.shape[:2]
    with open(str(path), "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())


def write_error_map(path, pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> None:
    """Visualize |pred - gt| as an 8-bit PGM.

    Errors inside the mask are scaled so the 99th percentile maps to
    255 (clipping above); pixels outside the mask are black.
    """
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise ValueError("error map inputs must share a shape")
    err = np.abs(pred.astype(np.float64) - gt.astype(np.float64))
    m = mask.astype(bool)
    out = np.zeros(pred.shape, dtype=np.uint8)
    if m.any():
        vals = err[m]
        hi = np.percentile(vals, 99.0)
        if hi <= 0:
            hi = 1.0
        out[m] = np.clip(np.round(err[m] / hi * 255.0), 0, 255).astype(np.uint8)
    write_pgm(path, out)
