"""Training objective: masked MSE plus a surface-normal agreement term."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor


def _as_nchw(t):
    if t.ndim == 2:
        H, W = t.shape
        return F.reshape(t, (1, 1, H, W))
    if t.ndim == 4:
        return t
    raise ValueError(f"expected [H,W] or [N,1,H,W] depth, got shape {tuple(t.shape)}")


def _mask_tensor(mask, like: Tensor) -> Tensor:
    m = np.asarray(mask)
    if m.ndim == 2:
        m = m[None, None]
    elif m.ndim == 3:
        m = m[:, None]
    if not m.any():
        raise ValueError("loss mask selects no pixels")
    return Tensor(m.astype(like.dtype))


def loss_mse(pred, gt, mask) -> Tensor:
    """Mean squared depth error over masked pixels."""
    pred, gt = _as_nchw(pred), _as_nchw(gt)
    m = _mask_tensor(mask, pred)
    n = float(m.data.sum())
    diff = F.sub(pred, gt)
    return F.mul(F.sum(F.mul(F.mul(diff, diff), m)), 1.0 / n)


def surface_normals(depth) -> Tensor:
    """Unit normals from image-space depth gradients.

    Central differences inside, one-sided at the borders, unit pixel
    spacing: n = (-dD/dx, -dD/dy, 1) / |.|.  Returns [N,3,H,W] (or
    [3,H,W] for a 2-d input).
    """
    squeeze = depth.ndim == 2
    d = _as_nchw(depth)
    N, _, H, W = d.shape
    if H < 3 or W < 3:
        raise ValueError(f"normals need H,W >= 3, got ({H},{W})")

    left = F.sub(F.narrow(d, 3, 1, 1), F.narrow(d, 3, 0, 1))
    mid_x = F.mul(F.sub(F.narrow(d, 3, 2, W - 2), F.narrow(d, 3, 0, W - 2)), 0.5)
    right = F.sub(F.narrow(d, 3, W - 1, 1), F.narrow(d, 3, W - 2, 1))
    dx = F.concat([left, mid_x, right], axis=3)

    top = F.sub(F.narrow(d, 2, 1, 1), F.narrow(d, 2, 0, 1))
    mid_y = F.mul(F.sub(F.narrow(d, 2, 2, H - 2), F.narrow(d, 2, 0, H - 2)), 0.5)
    bot = F.sub(F.narrow(d, 2, H - 1, 1), F.narrow(d, 2, H - 2, 1))
    dy = F.concat([top, mid_y, bot], axis=2)

    ones = Tensor(np.ones((N, 1, H, W), dtype=d.dtype))
    norm = F.sqrt(F.add(F.add(F.mul(dx, dx), F.mul(dy, dy)), 1.0))
    n = F.div(F.concat([F.neg(dx), F.neg(dy), ones], axis=1), norm)
    return F.reshape(n, (3, H, W)) if squeeze else n


def loss_normal(pred, gt, mask) -> Tensor:
    """Masked mean of 1 - n(pred) . n(gt)."""
    pred, gt = _as_nchw(pred), _as_nchw(gt)
    m = _mask_tensor(mask, pred)
    n = float(m.data.sum())
    dot = F.sum(F.mul(surface_normals(pred), surface_normals(gt)), axis=1, keepdims=True)
    return F.mul(F.sum(F.mul(F.sub(1.0, dot), m)), 1.0 / n)


def total_loss(pred, gt, mask, lam: float = 0.1) -> Tensor:
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    mse = loss_mse(pred, gt, mask)
    if lam == 0:
        return mse
    return F.add(mse, F.mul(loss_normal(pred, gt, mask), lam))
