"""Numba conv2d kernels.

Each output element is produced by exactly one prange iteration, so the
parallel loops are race-free and bit-deterministic for a fixed build.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def _forward(x, w, sh, sw, ph, pw, groups, y):
    N, Cin, H, W = x.shape
    Cout, Cg, kh, kw = w.shape
    Ho, Wo = y.shape[2], y.shape[3]
    cpg = Cout // groups
    for idx in prange(N * Cout):
        n = idx // Cout
        co = idx % Cout
        ci0 = (co // cpg) * Cg
        for oh in range(Ho):
            ih0 = oh * sh - ph
            for ow in range(Wo):
                iw0 = ow * sw - pw
                acc = 0.0
                for ci in range(Cg):
                    for i in range(kh):
                        ih = ih0 + i
                        if ih < 0 or ih >= H:
                            continue
                        for j in range(kw):
                            iw = iw0 + j
                            if 0 <= iw < W:
                                acc += x[n, ci0 + ci, ih, iw] * w[co, ci, i, j]
                y[n, co, oh, ow] = acc


@njit(parallel=True, cache=True)
def _grad_x(gy, w, sh, sw, ph, pw, groups, gx):
    N, Cin, H, W = gx.shape
    Cout, Cg, kh, kw = w.shape
    Ho, Wo = gy.shape[2], gy.shape[3]
    cpg = Cout // groups
    cing = Cin // groups
    for idx in prange(N * Cin):
        n = idx // Cin
        ci = idx % Cin
        g = ci // cing
        cil = ci - g * cing
        co0 = g * cpg
        for ih in range(H):
            for iw in range(W):
                acc = 0.0
                for i in range(kh):
                    t = ih + ph - i
                    if t < 0 or t % sh != 0:
                        continue
                    oh = t // sh
                    if oh >= Ho:
                        continue
                    for j in range(kw):
                        u = iw + pw - j
                        if u < 0 or u % sw != 0:
                            continue
                        ow = u // sw
                        if ow >= Wo:
                            continue
                        for co in range(co0, co0 + cpg):
                            acc += gy[n, co, oh, ow] * w[co, cil, i, j]
                gx[n, ci, ih, iw] = acc


@njit(parallel=True, cache=True)
def _grad_w(gy, x, sh, sw, ph, pw, groups, gw):
    N, Cin, H, W = x.shape
    Cout, Cg, kh, kw = gw.shape
    Ho, Wo = gy.shape[2], gy.shape[3]
    cpg = Cout // groups
    cing = Cin // groups
    for co in prange(Cout):
        ci0 = (co // cpg) * cing
        for ci in range(Cg):
            for i in range(kh):
                for j in range(kw):
                    acc = 0.0
                    for n in range(N):
                        for oh in range(Ho):
                            ih = oh * sh - ph + i
                            if ih < 0 or ih >= H:
                                continue
                            for ow in range(Wo):
                                iw = ow * sw - pw + j
                                if 0 <= iw < W:
                                    acc += gy[n, co, oh, ow] * x[n, ci0 + ci, ih, iw]
                    gw[co, ci, i, j] = acc


def conv2d_forward(x, w, sh, sw, ph, pw, groups):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    N, Cin, H, W = x.shape
    Cout = w.shape[0]
    Ho = (H + 2 * ph - w.shape[2]) // sh + 1
    Wo = (W + 2 * pw - w.shape[3]) // sw + 1
    y = np.empty((N, Cout, Ho, Wo), dtype=x.dtype)
    _forward(x, w, sh, sw, ph, pw, groups, y)
    return y


def conv2d_grad_x(gy, w, x_shape, sh, sw, ph, pw, groups):
    gy = np.ascontiguousarray(gy)
    w = np.ascontiguousarray(w)
    gx = np.empty(x_shape, dtype=gy.dtype)
    _grad_x(gy, w, sh, sw, ph, pw, groups, gx)
    return gx


def conv2d_grad_w(gy, x, w_shape, sh, sw, ph, pw, groups):
    gy = np.ascontiguousarray(gy)
    x = np.ascontiguousarray(x)
    gw = np.empty(w_shape, dtype=gy.dtype)
    _grad_w(gy, x, sh, sw, ph, pw, groups, gw)
    return gw
