"""Cross-modal fusion blocks.

SMFM gates each branch with a squeeze-excite style channel weight and
adds them.  The bottleneck block (BTMFM) runs SMFM first, then flattens
the map to tokens for attention, a gated state-space mixer, and a
feed-forward stage before unflattening.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .nn import Conv2d, LayerNorm, Linear, Module, MultiHeadAttention, Parameter
from .tensor import Tensor

# a_raw such that softplus(a_raw) == 1, so A starts at -1
A_RAW_INIT = float(np.log(np.e - 1.0))
# dt bias such that exp(softplus(bias) * A_init) == 0.9
DT_BIAS_INIT = float(np.log(np.expm1(-np.log(0.9))))


def to_tokens(x):
    """[N,C,h,w] -> [N, h*w, C] in row-major raster order."""
    N, C, h, w = x.shape
    return F.reshape(F.permute(x, (0, 2, 3, 1)), (N, h * w, C))


def from_tokens(t, h: int, w: int):
    N, L, C = t.shape
    if L != h * w:
        raise ValueError(f"token count {L} != {h}*{w}")
    return F.permute(F.reshape(t, (N, h, w, C)), (0, 3, 1, 2))


class ChannelExcitation(Module):
    """sigmoid(W5 . concat(relu(W1 z) .. relu(W4 z))), z = GAP(F)."""

    def __init__(self, channels: int, rng):
        super().__init__()
        if channels % 4:
            raise ValueError(f"channel excitation needs channels % 4 == 0, got {channels}")
        q = channels // 4
        self.w1 = Linear(channels, q, rng)
        self.w2 = Linear(channels, q, rng)
        self.w3 = Linear(channels, q, rng)
        self.w4 = Linear(channels, q, rng)
        self.w5 = Linear(channels, channels, rng)

    def forward(self, f):
        N, C = f.shape[0], f.shape[1]
        z = F.reshape(F.global_avg_pool(f), (N, C))
        s = F.concat(
            [F.relu(self.w1(z)), F.relu(self.w2(z)), F.relu(self.w3(z)), F.relu(self.w4(z))],
            axis=1,
        )
        return F.reshape(F.sigmoid(self.w5(s)), (N, C, 1, 1))


class SMFM(Module):
    """Gated sum of the two branches; separate excitation per modality."""

    def __init__(self, channels: int, rng):
        super().__init__()
        self.exc_r = ChannelExcitation(channels, rng)
        self.exc_d = ChannelExcitation(channels, rng)

    def forward(self, f_rgb, f_depth):
        if f_rgb.shape != f_depth.shape:
            raise ValueError(f"branch shapes differ: {f_rgb.shape} vs {f_depth.shape}")
        return F.add(
            F.mul(self.exc_r(f_rgb), f_rgb),
            F.mul(self.exc_d(f_depth), f_depth),
        )


class MhaResidual(Module):
    def __init__(self, dim: int, heads: int, rng):
        super().__init__()
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln = LayerNorm(dim)
        self.attn.o.w.data[:] = 0.0  # attention branch silent at init

    def forward(self, t):
        return self.ln(F.add(t, self.attn(t)))


class SSMGatedBlock(Module):
    """up-project, causal token conv, selective scan, SiLU gate, down-project."""

    def __init__(self, dim: int, rng, state: int = 8, expand: int = 2, conv_kernel: int = 4):
        super().__init__()
        E = expand * dim
        self.E = E
        self.state = state
        self.conv_kernel = conv_kernel
        self.up = Linear(dim, E, rng, init="trunc")
        self.conv = Conv2d(E, E, (1, conv_kernel), rng, groups=E)
        self.a_raw = Parameter(np.full((E, state), A_RAW_INIT, dtype=np.float32))
        self.b_proj = Linear(E, state, rng, bias=False, init="trunc")
        self.c_proj = Linear(E, state, rng, bias=False, init="trunc")
        self.dt_proj = Linear(E, E, rng, init="trunc")
        self.dt_proj.b.data = np.full(E, DT_BIAS_INIT, dtype=np.float32)
        self.down = Linear(E, dim, rng, init="trunc")
        self.down.w.data[:] = 0.0  # scan branch silent at init

    def forward(self, t):
        N, L, _ = t.shape
        u = self.up(t)  # [N,L,E]
        seq = F.reshape(F.permute(u, (0, 2, 1)), (N, self.E, 1, L))
        pad = Tensor(np.zeros((N, self.E, 1, self.conv_kernel - 1), dtype=seq.dtype))
        seq = F.concat([pad, seq], axis=3)  # left pad keeps the conv causal
        c = self.conv(seq)
        x = F.silu(F.permute(F.reshape(c, (N, self.E, L)), (0, 2, 1)))
        delta = F.softplus(self.dt_proj(x))
        A = F.neg(F.softplus(self.a_raw))
        B = self.b_proj(x)
        Cp = self.c_proj(x)
        y = F.selective_scan(x, delta, A, B, Cp)
        return self.down(F.mul(y, F.silu(u)))


class FfnResidual(Module):
    def __init__(self, dim: int, rng):
        super().__init__()
        self.fc1 = Linear(dim, 4 * dim, rng, init="trunc")
        self.fc2 = Linear(4 * dim, dim, rng, init="trunc")
        self.ln = LayerNorm(dim)
        self.fc2.w.data[:] = 0.0  # mlp branch silent at init

    def forward(self, t):
        return self.ln(F.add(t, self.fc2(F.gelu(self.fc1(t)))))


class BTMFM(Module):
    """Bottleneck fusion: SMFM, then token attention + state-space mixing.

    ``use_smfm`` swaps the gated pre-fusion for a plain add and
    ``use_pipeline`` drops the token stages entirely; both exist so the
    surrounding model can ablate each contribution independently.
    """

    def __init__(
        self,
        channels: int,
        heads: int,
        rng,
        state: int = 8,
        expand: int = 2,
        conv_kernel: int = 4,
        use_smfm: bool = True,
        use_pipeline: bool = True,
    ):
        super().__init__()
        self.use_pipeline = use_pipeline
        self.pre = SMFM(channels, rng) if use_smfm else None
        if use_pipeline:
            self.mha_res = MhaResidual(channels, heads, rng)
            self.ssm = SSMGatedBlock(channels, rng, state=state, expand=expand, conv_kernel=conv_kernel)
            self.ffn = FfnResidual(channels, rng)

    def forward(self, f_rgb, f_depth):
        if f_rgb.shape != f_depth.shape:
            raise ValueError(f"branch shapes differ: {f_rgb.shape} vs {f_depth.shape}")
        x = self.pre(f_rgb, f_depth) if self.pre is not None else F.add(f_rgb, f_depth)
        if not self.use_pipeline:
            return x
        N, C, h, w = x.shape
        t = to_tokens(x)
        t = self.mha_res(t)
        t = F.add(t, self.ssm(t))
        t = self.ffn(t)
        return from_tokens(t, h, w)
