"""Dual-branch encoder.

One branch runs windowed self-attention over the RGB-D stack, the other
runs residual convolutions over depth alone.  Both emit a four-stage
pyramid with channels C*2^i at stride 4*2^i, shape-matched per stage so
the fusion stages can combine them elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .nn import Conv2d, GroupNorm, LayerNorm, Linear, Module, ModuleList, MultiHeadAttention


@dataclass
class EncoderConfig:
    base_channels: int = 24
    num_stages: int = 4
    window_size: int = 4
    heads: tuple = (2, 4, 8, 16)
    blocks_per_stage: tuple = (2, 2, 2, 2)
    rgb_branch_input: str = "rgbd"  # or "rgb"

    def __post_init__(self):
        if self.base_channels % 4:
            raise ValueError(f"base_channels {self.base_channels} must be divisible by 4")
        if len(self.heads) < self.num_stages or len(self.blocks_per_stage) < self.num_stages:
            raise ValueError("heads/blocks_per_stage shorter than num_stages")
        for i in range(self.num_stages):
            if self.stage_channels(i) % self.heads[i]:
                raise ValueError(
                    f"stage {i}: {self.stage_channels(i)} channels, {self.heads[i]} heads"
                )
        if self.rgb_branch_input not in ("rgbd", "rgb"):
            raise ValueError(f"rgb_branch_input must be rgbd|rgb, got {self.rgb_branch_input}")

    def stage_channels(self, i: int) -> int:
        return self.base_channels * (2**i)

    @property
    def stride_product(self) -> int:
        return 4 * 2 ** (self.num_stages - 1)


@dataclass
class FeaturePyramid:
    rgb: list = field(default_factory=list)
    depth: list = field(default_factory=list)


def effective_window(h: int, w: int, window: int) -> int:
    """Largest size <= window that tiles both h and w exactly."""
    for d in range(min(window, h, w), 0, -1):
        if h % d == 0 and w % d == 0:
            return d
    raise ValueError(f"no window tiles ({h},{w})")


class WindowBlock(Module):
    """LN -> windowed MHA -> residual, LN -> MLP -> residual.

    Odd blocks cyclically shift the map by half a window before
    partitioning so information crosses window borders.
    """

    def __init__(self, dim: int, heads: int, window: int, shifted: bool, rng):
        super().__init__()
        self.window = window
        self.shifted = shifted
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.fc1 = Linear(dim, 4 * dim, rng, init="trunc")
        self.fc2 = Linear(4 * dim, dim, rng, init="trunc")
        # zero both residual-branch outputs: the block starts as the
        # identity, which makes the whole stack trainable from step one
        self.attn.o.w.data[:] = 0.0
        self.fc2.w.data[:] = 0.0

    def forward(self, x):
        N, C, h, w = x.shape
        d = effective_window(h, w, self.window)
        shift = d // 2 if self.shifted else 0
        xp = F.permute(x, (0, 2, 3, 1))  # N,h,w,C

        a = self.ln1(xp)
        if shift:
            a = F.roll(F.roll(a, -shift, 1), -shift, 2)
        nh, nw = h // d, w // d
        wins = F.reshape(a, (N, nh, d, nw, d, C))
        wins = F.permute(wins, (0, 1, 3, 2, 4, 5))
        wins = F.reshape(wins, (N * nh * nw, d * d, C))
        o = self.attn(wins)
        o = F.reshape(o, (N, nh, nw, d, d, C))
        o = F.permute(o, (0, 1, 3, 2, 4, 5))
        o = F.reshape(o, (N, h, w, C))
        if shift:
            o = F.roll(F.roll(o, shift, 1), shift, 2)
        xp = F.add(xp, o)

        m = self.fc2(F.gelu(self.fc1(self.ln2(xp))))
        xp = F.add(xp, m)
        return F.permute(xp, (0, 3, 1, 2))


class AttentionBranch(Module):
    """Patch embedding plus per-stage window blocks and 2x2 merges."""

    def __init__(self, cfg: EncoderConfig, in_channels: int, rng):
        super().__init__()
        C = cfg.base_channels
        self.cfg = cfg
        self.patch = Conv2d(in_channels, C, 4, rng, stride=4)
        self.stages = ModuleList()
        self.downs = ModuleList()
        for i in range(cfg.num_stages):
            ci = cfg.stage_channels(i)
            blocks = ModuleList(
                WindowBlock(ci, cfg.heads[i], cfg.window_size, shifted=(j % 2 == 1), rng=rng)
                for j in range(cfg.blocks_per_stage[i])
            )
            self.stages.append(blocks)
            if i + 1 < cfg.num_stages:
                self.downs.append(Conv2d(ci, cfg.stage_channels(i + 1), 2, rng, stride=2))

    def forward(self, x):
        N, C, H, W = x.shape
        if H % 4 or W % 4:
            raise ValueError(f"patch embedding needs H,W divisible by 4, got ({H},{W})")
        x = self.patch(x)
        feats = []
        for i, blocks in enumerate(self.stages):
            for blk in blocks:
                x = blk(x)
            feats.append(x)
            if i < len(self.downs):
                x = self.downs[i](x)
        return feats


class ResBlock(Module):
    """x + GN(conv(relu(GN(conv(x))))); zeroed second conv gives identity."""

    def __init__(self, channels: int, rng):
        super().__init__()
        self.conv1 = Conv2d(channels, channels, 3, rng, padding=1)
        self.gn1 = GroupNorm(1, channels)
        self.conv2 = Conv2d(channels, channels, 3, rng, padding=1)
        self.gn2 = GroupNorm(1, channels)
        self.gn2.g.data[:] = 0.0  # residual branch silent at init

    def forward(self, x):
        r = F.relu(self.gn1(self.conv1(x)))
        r = self.gn2(self.conv2(r))
        return F.add(x, r)


class ConvBranch(Module):
    """Depth-only branch: strided stem to /4, then residual stages."""

    def __init__(self, cfg: EncoderConfig, rng):
        super().__init__()
        C = cfg.base_channels
        self.cfg = cfg
        self.stem = Conv2d(1, C, 3, rng, padding=1)
        self.stem_gn = GroupNorm(1, C)
        self.down_a = Conv2d(C, C, 2, rng, stride=2)
        self.down_a_gn = GroupNorm(1, C)
        self.down_b = Conv2d(C, C, 2, rng, stride=2)
        self.down_b_gn = GroupNorm(1, C)
        self.stages = ModuleList()
        self.transitions = ModuleList()
        self.transition_gns = ModuleList()
        for i in range(cfg.num_stages):
            ci = cfg.stage_channels(i)
            self.stages.append(ModuleList(ResBlock(ci, rng) for _ in range(2)))
            if i + 1 < cfg.num_stages:
                self.transitions.append(Conv2d(ci, cfg.stage_channels(i + 1), 2, rng, stride=2))
                self.transition_gns.append(GroupNorm(1, cfg.stage_channels(i + 1)))

    def forward(self, d):
        x = F.relu(self.stem_gn(self.stem(d)))
        x = F.relu(self.down_a_gn(self.down_a(x)))
        x = F.relu(self.down_b_gn(self.down_b(x)))
        feats = []
        for i, blocks in enumerate(self.stages):
            for blk in blocks:
                x = blk(x)
            feats.append(x)
            if i < len(self.transitions):
                x = F.relu(self.transition_gns[i](self.transitions[i](x)))
        return feats


class DualEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng):
        super().__init__()
        self.cfg = cfg
        in_ch = 4 if cfg.rgb_branch_input == "rgbd" else 3
        self.rgb_branch = AttentionBranch(cfg, in_ch, rng)
        self.depth_branch = ConvBranch(cfg, rng)

    def forward(self, rgb, depth) -> FeaturePyramid:
        if rgb.shape[0] != depth.shape[0] or rgb.shape[2:] != depth.shape[2:]:
            raise ValueError(f"rgb {rgb.shape} and depth {depth.shape} are misaligned")
        if rgb.shape[1] != 3 or depth.shape[1] != 1:
            raise ValueError(f"expected rgb [N,3,H,W] and depth [N,1,H,W], got {rgb.shape}, {depth.shape}")
        H, W = rgb.shape[2:]
        sp = self.cfg.stride_product
        if H % sp or W % sp:
            raise ValueError(f"input ({H},{W}) must be divisible by stride product {sp}")
        rin = F.concat([rgb, depth], axis=1) if self.cfg.rgb_branch_input == "rgbd" else rgb
        rgb_feats = self.rgb_branch(rin)
        depth_feats = self.depth_branch(depth)
        return FeaturePyramid(rgb=rgb_feats, depth=depth_feats)
