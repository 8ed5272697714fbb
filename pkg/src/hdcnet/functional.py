"""Differentiable op catalogue.

Primitives record a backward closure via ``tensor._make``; composites
(softmax, layer_norm, ...) are built from primitives so their gradients
come for free.  Convolution and the selective scan dispatch through
``hdcnet._kernels`` to the active backend.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .tensor import Tensor, _make, _unbroadcast, grad_enabled


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs(*ts) -> bool:
    return grad_enabled() and any(t.requires_grad for t in ts)


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def ones(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype))


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    y = a.data + b.data
    if not _needs(a, b):
        return Tensor(y)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _make(y, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    y = a.data - b.data
    if not _needs(a, b):
        return Tensor(y)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    return _make(y, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    y = a.data * b.data
    if not _needs(a, b):
        return Tensor(y)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _make(y, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    y = a.data / b.data
    if not _needs(a, b):
        return Tensor(y)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(y, (a, b), bw)


def neg(a) -> Tensor:
    a = _t(a)
    y = -a.data
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(-g)

    return _make(y, (a,), bw)


def pow(a, p: float) -> Tensor:
    a = _t(a)
    y = a.data**p
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g * p * a.data ** (p - 1))

    return _make(y, (a,), bw)


def exp(a) -> Tensor:
    a = _t(a)
    y = np.exp(a.data)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g * y)

    return _make(y, (a,), bw)


def log(a) -> Tensor:
    a = _t(a)
    y = np.log(a.data)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g / a.data)

    return _make(y, (a,), bw)


def sqrt(a) -> Tensor:
    a = _t(a)
    y = np.sqrt(a.data)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g * 0.5 / y)

    return _make(y, (a,), bw)


# --------------------------------------------------------------- activations


def _sigmoid_arr(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(a) -> Tensor:
    a = _t(a)
    y = np.maximum(a.data, 0)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g * (a.data > 0))

    return _make(y, (a,), bw)


def sigmoid(a) -> Tensor:
    a = _t(a)
    y = _sigmoid_arr(a.data)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g * y * (1.0 - y))

    return _make(y, (a,), bw)


def silu(a) -> Tensor:
    a = _t(a)
    s = _sigmoid_arr(a.data)
    y = a.data * s
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g * (s + a.data * s * (1.0 - s)))

    return _make(y, (a,), bw)


def gelu(a) -> Tensor:
    """tanh-approximated GELU (smooth, no kinks)."""
    a = _t(a)
    x = a.data
    c = np.sqrt(2.0 / np.pi).astype(x.dtype) if x.dtype == np.float32 else np.sqrt(2.0 / np.pi)
    t = np.tanh(c * (x + 0.044715 * x**3))
    y = 0.5 * x * (1.0 + t)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        du = c * (1.0 + 3 * 0.044715 * x**2)
        a._accum(g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du))

    return _make(y, (a,), bw)


def softplus(a) -> Tensor:
    a = _t(a)
    y = np.logaddexp(np.zeros((), dtype=a.data.dtype), a.data)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g * _sigmoid_arr(a.data))

    return _make(y, (a,), bw)


# ---------------------------------------------------------------- reductions


def sum(a, axis=None, keepdims=False) -> Tensor:
    a = _t(a)
    y = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
    if not _needs(a):
        return Tensor(y)
    shape = a.data.shape

    def bw(g):
        gg = g
        if axis is not None and not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            ax = tuple(d % len(shape) for d in ax)
            gg = np.expand_dims(gg, ax)
        a._accum(np.broadcast_to(gg, shape))

    return _make(y, (a,), bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _t(a)
    if axis is None:
        n = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for d in ax:
            n *= a.data.shape[d]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def max_reduce(a, axis: int, keepdims=False) -> Tensor:
    """Max over one axis; gradient routes to the first argmax."""
    a = _t(a)
    idx = np.argmax(a.data, axis=axis)
    yk = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    y = yk if keepdims else np.squeeze(yk, axis=axis)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        gz = np.zeros_like(a.data)
        np.put_along_axis(gz, np.expand_dims(idx, axis), gg, axis=axis)
        a._accum(gz)

    return _make(y, (a,), bw)


# ------------------------------------------------------------ linear algebra


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    y = np.matmul(a.data, b.data)
    if not _needs(a, b):
        return Tensor(y)

    def bw(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accum(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accum(_unbroadcast(gb, b.data.shape))

    return _make(y, (a, b), bw)


def linear(x, w, b=None) -> Tensor:
    """x @ w (+ b), w stored [in, out]."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


# -------------------------------------------------------------- shape moves


def reshape(a, shape) -> Tensor:
    a = _t(a)
    y = a.data.reshape(shape)
    if not _needs(a):
        return Tensor(y)
    old = a.data.shape

    def bw(g):
        a._accum(g.reshape(old))

    return _make(y, (a,), bw)


def permute(a, axes) -> Tensor:
    a = _t(a)
    axes = tuple(axes)
    y = a.data.transpose(axes)
    if not _needs(a):
        return Tensor(y)
    inv = tuple(np.argsort(axes))

    def bw(g):
        a._accum(g.transpose(inv))

    return _make(y, (a,), bw)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    a = _t(a)
    idx = (slice(None),) * (axis % a.data.ndim) + (slice(start, start + length),)
    y = a.data[idx]
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        gz = np.zeros_like(a.data)
        gz[idx] = g
        a._accum(gz)

    return _make(y, (a,), bw)


def concat(tensors, axis: int) -> Tensor:
    ts = [_t(t) for t in tensors]
    y = np.concatenate([t.data for t in ts], axis=axis)
    if not _needs(*ts):
        return Tensor(y)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(ts, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accum(part)

    return _make(y, tuple(ts), bw)


def roll(a, shift: int, axis: int) -> Tensor:
    a = _t(a)
    y = np.roll(a.data, shift, axis=axis)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(np.roll(g, -shift, axis=axis))

    return _make(y, (a,), bw)


# ---------------------------------------------------------------- conv/pool


def _pair(v):
    return v if isinstance(v, tuple) else (v, v)


def conv2d(x, w, b=None, stride=1, padding=0, groups: int = 1) -> Tensor:
    x, w = _t(x), _t(w)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    N, Cin, H, W = x.data.shape
    Cout, Cg, kh, kw = w.data.shape
    if Cin % groups != 0 or Cg * groups != Cin:
        raise ValueError(
            f"conv2d: input has {Cin} channels but weight expects "
            f"{Cg}*groups={Cg * groups}"
        )
    if Cout % groups != 0:
        raise ValueError(f"conv2d: {Cout} output channels not divisible by groups={groups}")
    if (H + 2 * ph - kh) % sh != 0 or (W + 2 * pw - kw) % sw != 0:
        raise ValueError(
            f"conv2d: spatial dims ({H},{W}) with kernel ({kh},{kw}), "
            f"pad ({ph},{pw}), stride ({sh},{sw}) do not tile exactly"
        )
    y = K.conv2d_forward(x.data, w.data, sh, sw, ph, pw, groups)
    if not _needs(x, w):
        out = Tensor(y)
    else:
        xd, wd, xshape, wshape = x.data, w.data, x.data.shape, w.data.shape

        def bw(g):
            if x.requires_grad:
                x._accum(K.conv2d_grad_x(g, wd, xshape, sh, sw, ph, pw, groups))
            if w.requires_grad:
                w._accum(K.conv2d_grad_w(g, xd, wshape, sh, sw, ph, pw, groups))

        out = _make(y, (x, w), bw)
    if b is not None:
        out = add(out, reshape(_t(b), (1, Cout, 1, 1)))
    return out


def adaptive_avg_pool(a, out_h: int, out_w: int) -> Tensor:
    a = _t(a)
    N, C, H, W = a.data.shape
    if out_h < 1 or out_w < 1 or out_h > H or out_w > W:
        raise ValueError(f"adaptive_avg_pool: target ({out_h},{out_w}) invalid for ({H},{W})")
    if H % out_h == 0 and W % out_w == 0:
        kh, kw = H // out_h, W // out_w
        y = a.data.reshape(N, C, out_h, kh, out_w, kw).mean(axis=(3, 5))
        if not _needs(a):
            return Tensor(y)

        def bw(g):
            gg = g / (kh * kw)
            gg = np.repeat(np.repeat(gg, kh, axis=2), kw, axis=3)
            a._accum(gg)

        return _make(y, (a,), bw)

    # uneven bins: torch-style floor/ceil edges
    hs = [(i * H) // out_h for i in range(out_h)]
    he = [-(-((i + 1) * H) // out_h) for i in range(out_h)]
    ws = [(j * W) // out_w for j in range(out_w)]
    we = [-(-((j + 1) * W) // out_w) for j in range(out_w)]
    y = np.empty((N, C, out_h, out_w), dtype=a.data.dtype)
    for i in range(out_h):
        for j in range(out_w):
            y[:, :, i, j] = a.data[:, :, hs[i] : he[i], ws[j] : we[j]].mean(axis=(2, 3))
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        gz = np.zeros_like(a.data)
        for i in range(out_h):
            for j in range(out_w):
                cnt = (he[i] - hs[i]) * (we[j] - ws[j])
                gz[:, :, hs[i] : he[i], ws[j] : we[j]] += g[:, :, i : i + 1, j : j + 1] / cnt
        a._accum(gz)

    return _make(y, (a,), bw)


def global_avg_pool(a) -> Tensor:
    return adaptive_avg_pool(a, 1, 1)


def global_max_pool(a) -> Tensor:
    a = _t(a)
    N, C, H, W = a.data.shape
    flat = reshape(a, (N, C, H * W))
    return reshape(max_reduce(flat, 2, keepdims=True), (N, C, 1, 1))


def channel_mean(a) -> Tensor:
    return mean(a, axis=1, keepdims=True)


def channel_max(a) -> Tensor:
    return max_reduce(a, 1, keepdims=True)


def upsample_nearest2x(a) -> Tensor:
    a = _t(a)
    N, C, H, W = a.data.shape
    y = a.data.repeat(2, axis=2).repeat(2, axis=3)
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        a._accum(g.reshape(N, C, H, 2, W, 2).sum(axis=(3, 5)))

    return _make(y, (a,), bw)


def _bilinear2x_axis(n: int):
    # src = (dst + 0.5)/2 - 0.5, indices clamped at the borders
    dst = np.arange(2 * n)
    src = (dst + 0.5) / 2.0 - 0.5
    i0 = np.clip(np.floor(src).astype(np.int64), 0, n - 1)
    i1 = np.clip(i0 + 1, 0, n - 1)
    t = np.clip(src - np.floor(src), 0.0, 1.0)
    t[src < 0] = 0.0
    return i0, i1, t


def upsample_bilinear2x(a) -> Tensor:
    a = _t(a)
    N, C, H, W = a.data.shape
    dt = a.data.dtype
    h0, h1, th = _bilinear2x_axis(H)
    w0, w1, tw = _bilinear2x_axis(W)
    th = th.astype(dt)
    tw = tw.astype(dt)
    x = a.data
    top = x[:, :, h0][:, :, :, w0] * (1 - tw) + x[:, :, h0][:, :, :, w1] * tw
    bot = x[:, :, h1][:, :, :, w0] * (1 - tw) + x[:, :, h1][:, :, :, w1] * tw
    y = top * (1 - th)[:, None] + bot * th[:, None]
    if not _needs(a):
        return Tensor(y)

    def bw(g):
        gz = np.zeros_like(x)
        for hi, wh in ((h0, (1 - th)), (h1, th)):
            for wi, ww in ((w0, (1 - tw)), (w1, tw)):
                part = g * wh[:, None] * ww
                np.add.at(gz, (slice(None), slice(None), hi[:, None], wi[None, :]), part)
        a._accum(gz)

    return _make(y, (a,), bw)


# ------------------------------------------------------------ state recurrence


def selective_scan(x, delta, A, B, C) -> Tensor:
    """Diagonal state-space scan.

    x, delta: [N,L,E]; A: [E,S]; B, C: [N,L,S].  Returns y [N,L,E] where
    h_t = exp(delta_t A) h_{t-1} + (delta_t x_t) B_t and y_t = C_t . h_t.
    """
    x, delta, A, B, C = _t(x), _t(delta), _t(A), _t(B), _t(C)
    y, h = K.scan_forward(x.data, delta.data, A.data, B.data, C.data)
    if not _needs(x, delta, A, B, C):
        return Tensor(y)
    xd, dd, Ad, Bd, Cd = x.data, delta.data, A.data, B.data, C.data

    def bw(g):
        gx, gdelta, gA, gB, gC = K.scan_backward(g, xd, dd, Ad, Bd, Cd, h)
        if x.requires_grad:
            x._accum(gx)
        if delta.requires_grad:
            delta._accum(gdelta)
        if A.requires_grad:
            A._accum(gA)
        if B.requires_grad:
            B._accum(gB)
        if C.requires_grad:
            C._accum(gC)

    return _make(y, (x, delta, A, B, C), bw)


# ----------------------------------------------------------------- composites


def softmax(a, axis: int = -1) -> Tensor:
    a = _t(a)
    m = Tensor(np.max(a.data, axis=axis, keepdims=True))  # constant shift, exact grads
    e = exp(sub(a, m))
    return div(e, sum(e, axis=axis, keepdims=True))


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then affine."""
    mu = mean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = mean(mul(xc, xc), axis=-1, keepdims=True)
    inv = div(1.0, sqrt(add(var, eps)))
    return add(mul(mul(xc, inv), gamma), beta)


def group_norm(x, gamma, beta, num_groups: int, eps: float = 1e-5) -> Tensor:
    """Normalize [N,C,H,W] per sample over channel groups, then affine."""
    x = _t(x)
    N, C, H, W = x.data.shape
    if C % num_groups != 0:
        raise ValueError(f"group_norm: {C} channels not divisible by {num_groups} groups")
    g = reshape(x, (N, num_groups, (C // num_groups) * H * W))
    mu = mean(g, axis=-1, keepdims=True)
    gc = sub(g, mu)
    var = mean(mul(gc, gc), axis=-1, keepdims=True)
    normed = mul(gc, div(1.0, sqrt(add(var, eps))))
    out = reshape(normed, (N, C, H, W))
    return add(mul(out, reshape(_t(gamma), (1, C, 1, 1))), reshape(_t(beta), (1, C, 1, 1)))
