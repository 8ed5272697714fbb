"""Multi-scale decoder.

Each step aligns the shallower skip feature onto the deeper one (pool +
channel repetition), computes spatial and channel attention over their
sum, and blends the two scales with a learned sigmoid weight map before
upsampling.  A softplus head keeps predicted depth strictly positive.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .nn import Conv2d, GroupNorm, Module


def align_shallow(f_shallow, channels: int, h: int, w: int):
    """Pool the 2x-larger shallow map and duplicate channel k to 2k, 2k+1."""
    N, c2, hh, ww = f_shallow.shape
    if c2 * 2 != channels or hh != 2 * h or ww != 2 * w:
        raise ValueError(
            f"align_shallow: {tuple(f_shallow.shape)} does not align to ({channels},{h},{w})"
        )
    p = F.adaptive_avg_pool(f_shallow, h, w)
    p = F.reshape(p, (N, c2, 1, h, w))
    p = F.concat([p, p], axis=2)
    return F.reshape(p, (N, channels, h, w))


class SpatialAttention(Module):
    """7x7 conv over stacked channel-max and channel-mean maps (pre-sigmoid)."""

    def __init__(self, rng):
        super().__init__()
        self.conv = Conv2d(2, 1, 7, rng, padding=3)

    def forward(self, f):
        return self.conv(F.concat([F.channel_max(f), F.channel_mean(f)], axis=1))


class ChannelAttention(Module):
    """1x1 squeeze (C -> C/r) + relu + 1x1 expand on pooled features (pre-sigmoid)."""

    def __init__(self, channels: int, rng, reduction: int = 4):
        super().__init__()
        if channels % reduction:
            raise ValueError(f"channel attention: {channels} not divisible by r={reduction}")
        self.fc1 = Conv2d(channels, channels // reduction, 1, rng)
        self.fc2 = Conv2d(channels // reduction, channels, 1, rng)

    def forward(self, f):
        return self.fc2(F.relu(self.fc1(F.global_avg_pool(f))))


class DownFusion(Module):
    def __init__(self, channels: int, rng, reduction: int = 4):
        super().__init__()
        self.channels = channels
        self.sa = SpatialAttention(rng)
        self.ca = ChannelAttention(channels, rng, reduction)
        self.dw = Conv2d(2 * channels, 2 * channels, 3, rng, padding=1, groups=2 * channels)
        self.pw = Conv2d(2 * channels, channels, 1, rng)
        self.out_deep = Conv2d(channels, channels, 1, rng)
        self.out_shallow = Conv2d(channels, channels, 1, rng)
        # start as F_out = F (plain sum of scales); the weighted path
        # fades in as the output convs move off zero
        self.out_deep.w.data[:] = 0.0
        self.out_shallow.w.data[:] = 0.0

    def forward_parts(self, f_deep, f_shallow) -> dict:
        """Forward pass that also returns every intermediate by name."""
        N, C, h, w = f_deep.shape
        if C != self.channels:
            raise ValueError(f"down_fusion built for {self.channels} channels, got {C}")
        f_hat = align_shallow(f_shallow, C, h, w)
        f = F.add(f_deep, f_hat)
        f_sa = self.sa(f)
        f_ca = self.ca(f)
        mixed = F.add(f_ca, f_sa)  # [N,C,1,1] + [N,1,h,w] -> [N,C,h,w]
        wmap = F.sigmoid(self.pw(self.dw(F.concat([mixed, f], axis=1))))
        f_prime = F.add(
            self.out_deep(F.mul(wmap, f_deep)),
            self.out_shallow(F.mul(F.sub(1.0, wmap), f_hat)),
        )
        out = F.add(f_prime, f)
        return {
            "f_hat": f_hat,
            "f": f,
            "f_sa": f_sa,
            "f_ca": f_ca,
            "w": wmap,
            "f_prime": f_prime,
            "out": out,
        }

    def forward(self, f_deep, f_shallow):
        return self.forward_parts(f_deep, f_shallow)["out"]


class Decoder(Module):
    def __init__(self, base_channels: int, rng, upsample_mode: str = "nearest", reduction: int = 4):
        super().__init__()
        if upsample_mode not in ("nearest", "bilinear"):
            raise ValueError(f"upsample_mode must be nearest|bilinear, got {upsample_mode!r}")
        C = base_channels
        self.upsample_mode = upsample_mode
        self.df3 = DownFusion(8 * C, rng, reduction)
        self.conv3 = Conv2d(8 * C, 4 * C, 3, rng, padding=1)
        self.gn3 = GroupNorm(1, 4 * C)
        self.df2 = DownFusion(4 * C, rng, reduction)
        self.conv2 = Conv2d(4 * C, 2 * C, 3, rng, padding=1)
        self.gn2 = GroupNorm(1, 2 * C)
        self.df1 = DownFusion(2 * C, rng, reduction)
        self.conv1 = Conv2d(2 * C, C, 3, rng, padding=1)
        self.gn1 = GroupNorm(1, C)
        self.conv0 = Conv2d(C, C // 2, 3, rng, padding=1)
        self.gn0 = GroupNorm(1, C // 2)
        self.head = Conv2d(C // 2, 1, 3, rng, padding=1)
        # start predictions near indoor depth scale: softplus(0.87) ~ 1.2 m,
        # so early steps refine geometry instead of shifting a global bias
        self.head.b.data[:] = np.float32(0.87)

    def _up(self, x):
        if self.upsample_mode == "bilinear":
            return F.upsample_bilinear2x(x)
        return F.upsample_nearest2x(x)

    def forward(self, skips, bottleneck):
        if len(skips) != 3:
            raise ValueError(f"decoder needs 3 skip features, got {len(skips)}")
        s1, s2, s3 = skips
        x = self.df3(bottleneck, s3)
        x = F.relu(self.gn3(self.conv3(self._up(x))))
        x = self.df2(x, s2)
        x = F.relu(self.gn2(self.conv2(self._up(x))))
        x = self.df1(x, s1)
        x = F.relu(self.gn1(self.conv1(self._up(x))))
        x = F.relu(self.gn0(self.conv0(self._up(x))))
        return F.softplus(self.head(self._up(x)))
