"""Single-file checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"HDCK"
    version u32      currently 1
    cfglen  u32      length of the config blob
    config  bytes    utf-8 "key=value" lines, order preserved
    count   u32      number of tensors
    per tensor:
        namelen u16, name utf-8
        ndim    u8,  dims u32 each
        crc     u32  crc32 of the payload
        payload float32 little-endian, C order

Every read is checked: wrong magic, unknown version, truncation, and
per-tensor checksum failures all raise CheckpointError with the tensor
name where one applies.  Config keys the current code does not know
are preserved verbatim, never dropped.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"HDCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, tensors: dict, config: dict) -> None:
    """tensors: name -> float32 ndarray; config: str -> str."""
    parts = [MAGIC, struct.pack("<I", VERSION)]
    lines = []
    for k, v in config.items():
        k, v = str(k), str(v)
        if "=" in k or "\n" in k or "\n" in v:
            raise CheckpointError(f"config key/value not encodable: {k!r}")
        lines.append(f"{k}={v}")
    blob = "\n".join(lines).encode()
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        # not ascontiguousarray: that would silently promote 0-d to (1,)
        arr = np.asarray(arr, dtype=np.float32)
        nb = name.encode()
        if len(nb) > 65535:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        if arr.ndim > 255:
            raise CheckpointError(f"{name}: ndim {arr.ndim} > 255")
        payload = arr.astype("<f4").tobytes()
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
        parts.append(payload)
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]


def load_checkpoint(path):
    """Returns (tensors: dict[str, float32 ndarray], config: dict[str, str])."""
    path = str(path)
    buf = Path(path).read_bytes()
    r = _Reader(buf, path)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, this build reads {VERSION}")
    blob = r.take(r.u32("config length"), "config").decode()
    config = {}
    for line in blob.splitlines():
        if not line:
            continue
        if "=" not in line:
            raise CheckpointError(f"{path}: malformed config line {line!r}")
        k, v = line.split("=", 1)
        config[k] = v
    tensors = {}
    count = r.u32("tensor count")
    for i in range(count):
        name = r.take(r.u16(f"name length of tensor {i}"), f"name of tensor {i}").decode()
        ndim = r.u8(f"{name}: ndim")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"{name}: dims"))
        crc = r.u32(f"{name}: checksum")
        n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        payload = r.take(4 * n, f"{name}: payload")
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise CheckpointError(f"{path}: checksum mismatch in tensor {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)
    if r.off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - r.off} trailing bytes after last tensor")
    return tensors, config
