"""Procedural desk scenes for training and tests.

Each scene is a tilted background plane seen from a fixed camera with a
few convex primitives (boxes, spheres, cylinders) floating in front of
it.  A subset of the primitives is flagged transparent; the raw depth
channel degrades exactly there, the way commodity sensors fail on
glass: holes (zeros) or background bleed-through, chosen per pixel.
Everything is derived from one seed, so a SceneSpec is a complete,
reproducible description of its sample.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

_KINDS = ("box", "sphere", "cylinder")


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    height: int = 48
    width: int = 64
    n_primitives: int = 3
    hole_ratio: float = 0.9
    noise_sigma: float = 0.004
    hole_mode: str = "zero"  # "zero" | "background"
    # how far object front surfaces sit in front of the table, in meters;
    # low cups vs tall bottles change how wrong a false reading can be
    depth_offset: tuple = (0.04, 0.12)

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise ValueError(f"scene too small: {self.width}x{self.height}")
        if self.n_primitives < 0:
            raise ValueError("n_primitives must be >= 0")
        if self.n_primitives == 0 and self.hole_ratio > 0:
            raise ValueError("hole_ratio > 0 needs at least one primitive to corrupt")
        if not 0.0 <= self.hole_ratio <= 1.0:
            raise ValueError(f"hole_ratio outside [0,1]: {self.hole_ratio}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.hole_mode not in ("zero", "background"):
            raise ValueError(f"unknown hole_mode {self.hole_mode!r}")
        lo, hi = self.depth_offset
        if not 0.0 < lo <= hi:
            raise ValueError(f"depth_offset must satisfy 0 < lo <= hi, got {self.depth_offset}")

    @property
    def sample_id(self) -> str:
        return f"syn-{self.seed:08d}"


def _primitive_depth(kind, rng, xx, yy, background, depth_offset):
    """Depth map of one primitive's front surface: finite inside its
    footprint, +inf outside."""
    h, w = xx.shape
    cx = rng.uniform(0.2, 0.8) * w
    cy = rng.uniform(0.2, 0.8) * h
    # sized for desk resolutions: a few large objects, not confetti
    rad = rng.uniform(0.16, 0.3) * min(h, w)
    z_center = background[int(cy), int(cx)] - rng.uniform(*depth_offset)
    bump = rng.uniform(0.02, 0.08)
    z = np.full((h, w), np.inf)
    if kind == "box":
        sx = rad * rng.uniform(0.7, 1.3)
        sy = rad * rng.uniform(0.7, 1.3)
        inside = (np.abs(xx - cx) < sx) & (np.abs(yy - cy) < sy)
        z[inside] = z_center
    elif kind == "sphere":
        d2 = ((xx - cx) ** 2 + (yy - cy) ** 2) / rad**2
        inside = d2 < 1.0
        z[inside] = z_center - bump * np.sqrt(1.0 - d2[inside])
    else:  # cylinder, axis vertical in the image
        half = rad * rng.uniform(1.0, 2.0)
        t2 = ((xx - cx) / rad) ** 2
        inside = (t2 < 1.0) & (np.abs(yy - cy) < half)
        z[inside] = z_center - bump * np.sqrt(1.0 - t2[inside])
    return z, inside


def _shade(base_rgb, depth, inside):
    """Cheap lambert-ish shading: nearer pixels of a primitive render
    brighter, which gives spheres and cylinders visible curvature."""
    d = depth[inside]
    lo, hi = float(d.min()), float(d.max())
    rel = np.zeros_like(d) if hi - lo < 1e-9 else (hi - d) / (hi - lo)
    return base_rgb[None, :] * (0.62 + 0.38 * rel[:, None])


def generate_scene(spec: SceneSpec):
    """Render the scene.  Returns a dict with keys rgb [H,W,3] float in
    [0,1], raw [H,W] meters, gt [H,W] meters, valid [H,W] bool,
    transparent [H,W] bool, and id."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    z0 = rng.uniform(1.0, 1.4)
    ax = rng.uniform(-0.15, 0.15)
    ay = rng.uniform(-0.15, 0.15)
    background = z0 + ax * (xx / w - 0.5) + ay * (yy / h - 0.5)

    # background colour: muted gradient so the RGB branch sees texture
    base = rng.uniform(0.35, 0.55, size=3)
    tilt = rng.uniform(-0.08, 0.08, size=3)
    rgb = base[None, None, :] + tilt[None, None, :] * (xx / w - 0.5)[:, :, None]

    n = spec.n_primitives
    n_transparent = max(1, n // 3) if n > 0 else 0
    transparent_ids = list(range(n_transparent))
    rgb_base = rgb  # bare tabletop, kept for redraws

    # A transparent primitive can end up fully buried behind later opaque
    # ones; such a scene has nothing to complete, so redraw the whole
    # arrangement (continuing the rng stream keeps this deterministic).
    for _ in range(64):
        gt = background.copy()
        owner = np.full((h, w), -1, dtype=np.int64)  # nearest primitive per pixel
        rgb = rgb_base.copy()
        for i in range(n):
            kind = _KINDS[int(rng.integers(0, len(_KINDS)))]
            z, inside = _primitive_depth(kind, rng, xx, yy, background, spec.depth_offset)
            visible = inside & (z < gt)
            if not visible.any():  # fully occluded by an earlier primitive
                continue
            gt[visible] = z[visible]
            owner[visible] = i

            hue = (i * 0.61803398875 + rng.uniform(0, 0.05)) % 1.0
            color = np.array(colorsys.hsv_to_rgb(hue, 0.65, 0.9))
            shaded = _shade(color, z, visible)
            if i < n_transparent:
                # see-through: most of the background colour survives
                rgb[visible] = 0.35 * shaded + 0.65 * rgb[visible]
            else:
                rgb[visible] = shaded

        transparent = np.isin(owner, transparent_ids) if n_transparent else np.zeros((h, w), bool)
        if n_transparent == 0 or transparent.any():
            break
    else:
        raise RuntimeError(f"scene {spec.sample_id}: transparent object buried in every redraw")

    raw = gt.copy()
    if transparent.any():
        holes = transparent & (rng.random((h, w)) < spec.hole_ratio)
        raw[holes] = 0.0 if spec.hole_mode == "zero" else background[holes]
    if spec.noise_sigma > 0:
        clean = (raw > 0) & ~transparent
        raw[clean] = np.maximum(raw[clean] + rng.normal(0, spec.noise_sigma, int(clean.sum())), 1e-3)

    return {
        "rgb": np.clip(rgb, 0.0, 1.0).astype(np.float32),
        "raw": raw.astype(np.float32),
        "gt": gt.astype(np.float32),
        "valid": gt > 0,
        "transparent": transparent,
        "id": spec.sample_id,
    }
