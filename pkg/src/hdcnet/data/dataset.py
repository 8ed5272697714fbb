"""On-disk sample layout and the manifest format.

A split lives under <root>/<split>/ as a manifest.txt plus five files
per sample id:

    <id>_rgb.ppm      8-bit colour
    <id>_raw.pgm      16-bit sensor depth (integer units)
    <id>_gt.pgm       16-bit ground-truth depth (integer units)
    <id>_valid.pgm    8-bit {0,255} ground-truth validity
    <id>_transp.pgm   8-bit {0,255} transparent-surface mask

The manifest holds one "depth_scale: <float>" line (meters per integer
unit) followed by one id per line; '#' starts a comment.  Depth zero
means missing in both raw and gt, so valid is equivalent to gt > 0 and
is stored only to keep that invariant checkable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pnm
from .synthetic import SceneSpec, generate_scene

DEFAULT_DEPTH_SCALE = 0.001  # millimetre units by default


@dataclass
class DepthSample:
    sample_id: str
    rgb: np.ndarray  # float32 [H,W,3] in [0,1]
    raw: np.ndarray  # float32 [H,W] meters, 0 = missing
    gt: np.ndarray  # float32 [H,W] meters, 0 = missing
    valid: np.ndarray  # bool [H,W]
    transparent: np.ndarray  # bool [H,W]

    def __post_init__(self):
        hw = self.gt.shape
        for name in ("raw", "valid", "transparent"):
            if getattr(self, name).shape != hw:
                raise ValueError(f"{self.sample_id}: {name} shape {getattr(self, name).shape} != gt {hw}")
        if self.rgb.shape[:2] != hw or self.rgb.ndim != 3:
            raise ValueError(f"{self.sample_id}: rgb shape {self.rgb.shape} does not match {hw}")
        if bool(np.any(self.valid != (self.gt > 0))):
            raise ValueError(f"{self.sample_id}: valid mask disagrees with gt > 0")


def from_scene(spec: SceneSpec) -> DepthSample:
    s = generate_scene(spec)
    return DepthSample(s["id"], s["rgb"], s["raw"], s["gt"], s["valid"], s["transparent"])


def _quantize(depth_m: np.ndarray, scale: float) -> np.ndarray:
    q = np.round(depth_m / scale)
    return np.clip(q, 0, 65535).astype(np.uint16)


def write_sample(sample: DepthSample, split_dir, scale: float = DEFAULT_DEPTH_SCALE) -> None:
    d = Path(split_dir)
    d.mkdir(parents=True, exist_ok=True)
    sid = sample.sample_id
    pnm.write_ppm(d / f"{sid}_rgb.ppm", np.clip(np.round(sample.rgb * 255.0), 0, 255).astype(np.uint8))
    pnm.write_pgm(d / f"{sid}_raw.pgm", _quantize(sample.raw, scale))
    gt16 = _quantize(sample.gt, scale)
    pnm.write_pgm(d / f"{sid}_gt.pgm", gt16)
    # derive validity from the quantized depth so valid == (gt > 0)
    # survives the integer roundtrip exactly
    pnm.write_pgm(d / f"{sid}_valid.pgm", np.where(gt16 > 0, 255, 0).astype(np.uint8))
    pnm.write_pgm(d / f"{sid}_transp.pgm", np.where(sample.transparent, 255, 0).astype(np.uint8))


def write_split(samples, root, split: str, scale: float = DEFAULT_DEPTH_SCALE) -> Path:
    """Write samples plus a manifest; returns the split directory."""
    d = Path(root) / split
    d.mkdir(parents=True, exist_ok=True)
    lines = ["# depth units are meters per integer step", f"depth_scale: {scale}"]
    for s in samples:
        write_sample(s, d, scale)
        lines.append(s.sample_id)
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")
    return d


def load_manifest(split_dir):
    """Parse manifest.txt: returns (depth_scale, [ids])."""
    path = Path(split_dir) / "manifest.txt"
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    scale = None
    ids = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("depth_scale:"):
            if scale is not None:
                raise ValueError(f"{path}:{lineno}: depth_scale given twice")
            scale = float(body.split(":", 1)[1])
            if scale <= 0:
                raise ValueError(f"{path}:{lineno}: depth_scale must be positive")
        else:
            if any(c.isspace() for c in body):
                raise ValueError(f"{path}:{lineno}: sample id {body!r} contains whitespace")
            ids.append(body)
    if scale is None:
        raise ValueError(f"{path}: missing depth_scale line")
    return scale, ids


def load_sample(split_dir, sample_id: str, scale: float) -> DepthSample:
    d = Path(split_dir)
    try:
        rgb8 = pnm.read_ppm(d / f"{sample_id}_rgb.ppm")
        raw16 = pnm.read_pgm(d / f"{sample_id}_raw.pgm")
        gt16 = pnm.read_pgm(d / f"{sample_id}_gt.pgm")
        valid8 = pnm.read_pgm(d / f"{sample_id}_valid.pgm")
        transp8 = pnm.read_pgm(d / f"{sample_id}_transp.pgm")
    except FileNotFoundError as e:
        raise FileNotFoundError(f"sample {sample_id!r}: {e}") from e
    except ValueError as e:
        raise ValueError(f"sample {sample_id!r}: {e}") from e
    hw = gt16.shape
    for name, arr in (("rgb", rgb8[..., 0]), ("raw", raw16), ("valid", valid8), ("transp", transp8)):
        if arr.shape != hw:
            raise ValueError(f"sample {sample_id!r}: {name} is {arr.shape}, gt is {hw}")
    return DepthSample(
        sample_id,
        (rgb8.astype(np.float32) / 255.0),
        raw16.astype(np.float32) * scale,
        gt16.astype(np.float32) * scale,
        valid8 > 127,
        transp8 > 127,
    )


def load_split(root, split: str):
    """Load every sample named by the manifest.  Returns (scale, samples)."""
    d = Path(root) / split
    scale, ids = load_manifest(d)
    return scale, [load_sample(d, sid, scale) for sid in ids]


def synthetic_split(n: int, base_seed: int, **spec_kw):
    """n in-memory samples with consecutive seeds; no disk involved."""
    return [from_scene(SceneSpec(seed=base_seed + i, **spec_kw)) for i in range(n)]
