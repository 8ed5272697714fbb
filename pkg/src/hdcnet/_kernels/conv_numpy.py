"""Pure-numpy conv2d kernels (im2col / col2im)."""

from __future__ import annotations

import numpy as np


def _out_size(H, W, kh, kw, sh, sw, ph, pw):
    return (H + 2 * ph - kh) // sh + 1, (W + 2 * pw - kw) // sw + 1


def _pad(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _patches(xp, kh, kw, sh, sw, Ho, Wo):
    # [N, C, kh, kw, Ho, Wo] copy built from strided slices
    N, C = xp.shape[:2]
    out = np.empty((N, C, kh, kw, Ho, Wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i, j] = xp[:, :, i : i + sh * (Ho - 1) + 1 : sh, j : j + sw * (Wo - 1) + 1 : sw]
    return out


def _scatter_patches(gp, N, C, Hp, Wp, kh, kw, sh, sw, Ho, Wo, dtype):
    gx = np.zeros((N, C, Hp, Wp), dtype=dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i : i + sh * (Ho - 1) + 1 : sh, j : j + sw * (Wo - 1) + 1 : sw] += gp[:, :, i, j]
    return gx


def conv2d_forward(x, w, sh, sw, ph, pw, groups):
    N, Cin, H, W = x.shape
    Cout, Cg, kh, kw = w.shape
    Ho, Wo = _out_size(H, W, kh, kw, sh, sw, ph, pw)
    xp = _pad(x, ph, pw)
    if groups == 1:
        cols = _patches(xp, kh, kw, sh, sw, Ho, Wo).reshape(N, Cin * kh * kw, Ho * Wo)
        y = np.matmul(w.reshape(Cout, -1), cols)
        return np.ascontiguousarray(y.reshape(N, Cout, Ho, Wo))
    if groups == Cin and Cout == Cin and Cg == 1:
        wins = _patches(xp, kh, kw, sh, sw, Ho, Wo)
        return np.einsum("nckluv,ckl->ncuv", wins, w[:, 0], optimize=True)
    # general grouped conv: per-group dense conv
    Cing = Cin // groups
    Coutg = Cout // groups
    ys = [
        conv2d_forward(x[:, g * Cing : (g + 1) * Cing], w[g * Coutg : (g + 1) * Coutg], sh, sw, ph, pw, 1)
        for g in range(groups)
    ]
    return np.concatenate(ys, axis=1)


def conv2d_grad_x(gy, w, x_shape, sh, sw, ph, pw, groups):
    N, Cin, H, W = x_shape
    Cout, Cg, kh, kw = w.shape
    _, _, Ho, Wo = gy.shape
    Hp, Wp = H + 2 * ph, W + 2 * pw
    if groups == 1:
        gmat = gy.reshape(N, Cout, Ho * Wo)
        gcols = np.matmul(w.reshape(Cout, -1).T, gmat)
        gp = gcols.reshape(N, Cin, kh, kw, Ho, Wo)
        gx = _scatter_patches(gp, N, Cin, Hp, Wp, kh, kw, sh, sw, Ho, Wo, gy.dtype)
    elif groups == Cin and Cout == Cin and Cg == 1:
        gp = gy[:, :, None, None] * w[None, :, 0, :, :, None, None]
        gx = _scatter_patches(gp, N, Cin, Hp, Wp, kh, kw, sh, sw, Ho, Wo, gy.dtype)
    else:
        Cing = Cin // groups
        Coutg = Cout // groups
        parts = [
            conv2d_grad_x(
                gy[:, g * Coutg : (g + 1) * Coutg],
                w[g * Coutg : (g + 1) * Coutg],
                (N, Cing, H, W),
                sh,
                sw,
                ph,
                pw,
                1,
            )
            for g in range(groups)
        ]
        return np.concatenate(parts, axis=1)
    if ph or pw:
        gx = gx[:, :, ph : Hp - ph, pw : Wp - pw]
    return np.ascontiguousarray(gx)


def conv2d_grad_w(gy, x, w_shape, sh, sw, ph, pw, groups):
    N, Cin, H, W = x.shape
    Cout, Cg, kh, kw = w_shape
    _, _, Ho, Wo = gy.shape
    xp = _pad(x, ph, pw)
    if groups == 1:
        cols = _patches(xp, kh, kw, sh, sw, Ho, Wo).reshape(N, Cin * kh * kw, Ho * Wo)
        gmat = gy.reshape(N, Cout, Ho * Wo)
        gw = np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0)
        return np.ascontiguousarray(gw.reshape(w_shape))
    if groups == Cin and Cout == Cin and Cg == 1:
        wins = _patches(xp, kh, kw, sh, sw, Ho, Wo)
        gw = np.einsum("ncuv,nckluv->ckl", gy, wins, optimize=True)
        return np.ascontiguousarray(gw[:, None])
    Cing = Cin // groups
    Coutg = Cout // groups
    parts = [
        conv2d_grad_w(
            gy[:, g * Coutg : (g + 1) * Coutg],
            x[:, g * Cing : (g + 1) * Cing],
            (Coutg, Cg, kh, kw),
            sh,
            sw,
            ph,
            pw,
            1,
        )
        for g in range(groups)
    ]
    return np.concatenate(parts, axis=0)
