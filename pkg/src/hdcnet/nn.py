"""Parameter containers and the standard layers.

Every parameter-bearing layer takes an ``rng`` (numpy Generator) so whole
models build deterministically from one seed.  Initialization is uniform
in +-1/sqrt(fan_in) for both linear and conv weights.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self):
        for name, p in self._params.items():
            yield name, p
        for mname, m in self._modules.items():
            for n, p in m.named_parameters():
                yield f"{mname}.{n}", p

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype):
        """Cast all parameters in place (float64 for gradient checking)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state dict mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if tuple(arr.shape) != tuple(p.data.shape):
                raise ValueError(
                    f"shape mismatch for {name}: expected {p.data.shape}, got {arr.shape}"
                )
            p.data = arr.astype(p.data.dtype)

    def __call__(self, *args, **kw):
        return self.forward(*args, **kw)


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._items = []
        for m in mods:
            self.append(m)

    def append(self, m: Module):
        self._modules[str(len(self._items))] = m
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) with tails beyond 2 std redrawn."""
    x = rng.normal(0.0, std, size=shape)
    for _ in range(8):
        bad = np.abs(x) > 2 * std
        if not bad.any():
            break
        x[bad] = rng.normal(0.0, std, size=int(bad.sum()))
    return np.clip(x, -2 * std, 2 * std).astype(np.float32)


class Linear(Module):
    """y = x @ w + b with w stored [in_features, out_features].

    init "fan_in" is uniform +-1/sqrt(in); "trunc" is truncated normal
    std 0.02 (used for attention/token projections).
    """

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng,
        bias: bool = True,
        init: str = "fan_in",
    ):
        super().__init__()
        if init == "trunc":
            w = trunc_normal(rng, (in_features, out_features))
        else:
            w = _uniform(rng, (in_features, out_features), 1.0 / np.sqrt(in_features))
        self.w = Parameter(w)
        self.b = Parameter(np.zeros(out_features, dtype=np.float32)) if bias else None

    def forward(self, x):
        return F.linear(x, self.w, self.b)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size,
        rng,
        stride=1,
        padding=0,
        groups: int = 1,
        bias: bool = True,
    ):
        super().__init__()
        kh, kw = (kernel_size, kernel_size) if isinstance(kernel_size, int) else kernel_size
        if in_channels % groups or out_channels % groups:
            raise ValueError(
                f"conv: channels ({in_channels},{out_channels}) not divisible by groups={groups}"
            )
        fan_in = (in_channels // groups) * kh * kw
        bound = 1.0 / np.sqrt(fan_in)
        self.w = Parameter(_uniform(rng, (out_channels, in_channels // groups, kh, kw), bound))
        self.b = Parameter(np.zeros(out_channels, dtype=np.float32)) if bias else None
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def forward(self, x):
        return F.conv2d(x, self.w, self.b, self.stride, self.padding, self.groups)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.g = Parameter(np.ones(dim, dtype=np.float32))
        self.b = Parameter(np.zeros(dim, dtype=np.float32))
        self.eps = eps

    def forward(self, x):
        return F.layer_norm(x, self.g, self.b, self.eps)


class GroupNorm(Module):
    def __init__(self, num_groups: int, channels: int, eps: float = 1e-5):
        super().__init__()
        if channels % num_groups:
            raise ValueError(f"group_norm: {channels} channels, {num_groups} groups")
        self.g = Parameter(np.ones(channels, dtype=np.float32))
        self.b = Parameter(np.zeros(channels, dtype=np.float32))
        self.num_groups = num_groups
        self.eps = eps

    def forward(self, x):
        return F.group_norm(x, self.g, self.b, self.num_groups, self.eps)


class MultiHeadAttention(Module):
    """Self-attention over [B, L, C] token sequences, no positional bias."""

    def __init__(self, dim: int, heads: int, rng):
        super().__init__()
        if dim % heads:
            raise ValueError(f"attention: dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / np.sqrt(self.head_dim)
        self.q = Linear(dim, dim, rng, init="trunc")
        self.k = Linear(dim, dim, rng, init="trunc")
        self.v = Linear(dim, dim, rng, init="trunc")
        self.o = Linear(dim, dim, rng, init="trunc")

    def _split(self, t, B, L):
        t = F.reshape(t, (B, L, self.heads, self.head_dim))
        return F.permute(t, (0, 2, 1, 3))

    def forward(self, x, return_probs: bool = False):
        B, L, C = x.shape
        q = self._split(self.q(x), B, L)
        k = self._split(self.k(x), B, L)
        v = self._split(self.v(x), B, L)
        logits = F.mul(F.matmul(q, F.permute(k, (0, 1, 3, 2))), self.scale)
        probs = F.softmax(logits, axis=-1)
        out = F.matmul(probs, v)
        out = F.reshape(F.permute(out, (0, 2, 1, 3)), (B, L, C))
        out = self.o(out)
        if return_probs:
            return out, probs
        return out
