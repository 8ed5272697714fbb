"""The full depth-completion network."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import functional as F
from .decoder import Decoder
from .encoder import DualEncoder, EncoderConfig
from .fusion import BTMFM, SMFM
from .nn import Module, ModuleList
from .tensor import Tensor


@dataclass
class ModelConfig:
    base_channels: int = 24
    window_size: int = 4
    heads: tuple = (2, 4, 8, 16)
    blocks_per_stage: tuple = (2, 2, 2, 2)
    mha_heads: int = 4
    ssm_state: int = 8
    ssm_expand: int = 2
    ssm_conv_kernel: int = 4
    reduction: int = 4
    upsample_mode: str = "nearest"
    rgb_branch_input: str = "rgbd"
    use_smfm: bool = True
    use_btmfm: bool = True

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            base_channels=self.base_channels,
            window_size=self.window_size,
            heads=tuple(self.heads),
            blocks_per_stage=tuple(self.blocks_per_stage),
            rgb_branch_input=self.rgb_branch_input,
        )

    def to_kv(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                out[f.name] = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                out[f.name] = "1" if v else "0"
            else:
                out[f.name] = str(v)
        return out

    @classmethod
    def from_kv(cls, kv: dict) -> "ModelConfig":
        kwargs = {}
        known = {f.name: f for f in fields(cls)}
        for name, raw in kv.items():
            if name not in known:
                continue
            default = getattr(cls, name)
            if isinstance(default, bool):
                kwargs[name] = raw not in ("0", "false", "False")
            elif isinstance(default, tuple):
                kwargs[name] = tuple(int(x) for x in raw.split(",") if x)
            elif isinstance(default, int):
                kwargs[name] = int(raw)
            else:
                kwargs[name] = raw
        return cls(**kwargs)


class HDCNet(Module):
    """rgb [N,3,H,W] + raw depth [N,1,H,W] -> completed depth [N,1,H,W].

    Inputs not divisible by the encoder stride product are edge-padded on
    the bottom/right before the network and the output is cropped back.
    """

    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        self.cfg = cfg
        enc_cfg = cfg.encoder_config()
        self.stride_product = enc_cfg.stride_product
        self.encoder = DualEncoder(enc_cfg, rng)
        if cfg.use_smfm:
            self.skip_fuse = ModuleList(
                SMFM(enc_cfg.stage_channels(i), rng) for i in range(3)
            )
        else:
            self.skip_fuse = None
        self.bottleneck = BTMFM(
            enc_cfg.stage_channels(3),
            cfg.mha_heads,
            rng,
            state=cfg.ssm_state,
            expand=cfg.ssm_expand,
            conv_kernel=cfg.ssm_conv_kernel,
            use_smfm=cfg.use_smfm,
            use_pipeline=cfg.use_btmfm,
        )
        self.decoder = Decoder(
            cfg.base_channels, rng, upsample_mode=cfg.upsample_mode, reduction=cfg.reduction
        )

    @classmethod
    def from_seed(cls, cfg: ModelConfig, seed: int) -> "HDCNet":
        return cls(cfg, np.random.default_rng(seed))

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def _pad(self, t: Tensor, sp: int):
        H, W = t.shape[2], t.shape[3]
        ph = (-H) % sp
        pw = (-W) % sp
        if ph == 0 and pw == 0:
            return t
        if t.requires_grad:
            raise ValueError(
                f"input ({H},{W}) needs padding to a multiple of {sp}, which is "
                "outside the gradient graph; pass divisible sizes for grad flow"
            )
        data = np.pad(t.data, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
        return Tensor(data)

    def forward(self, rgb: Tensor, depth: Tensor) -> Tensor:
        if rgb.shape[2:] != depth.shape[2:]:
            raise ValueError(f"rgb {rgb.shape} and depth {depth.shape} are misaligned")
        H, W = rgb.shape[2], rgb.shape[3]
        sp = self.stride_product
        rgb_p = self._pad(rgb, sp)
        depth_p = self._pad(depth, sp)
        pyr = self.encoder(rgb_p, depth_p)
        if self.skip_fuse is not None:
            skips = [self.skip_fuse[i](pyr.rgb[i], pyr.depth[i]) for i in range(3)]
        else:
            skips = [F.add(pyr.rgb[i], pyr.depth[i]) for i in range(3)]
        bott = self.bottleneck(pyr.rgb[3], pyr.depth[3])
        out = self.decoder(skips, bott)
        if out.shape[2] != H or out.shape[3] != W:
            out = F.narrow(F.narrow(out, 2, 0, H), 3, 0, W)
        return out
