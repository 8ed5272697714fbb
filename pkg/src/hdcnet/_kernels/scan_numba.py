"""Numba selective-scan kernels.

Forward parallelises over (batch, channel) pairs: each pair owns its own
state trajectory, so the prange is race-free.  Backward parallelises over
the batch only; the per-sample A-gradient goes into a private slice and is
reduced over the batch in numpy, keeping summation order fixed.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def _forward(x, delta, A, B, C, y, h):
    N, L, E = x.shape
    S = A.shape[1]
    for idx in prange(N * E):
        n = idx // E
        e = idx % E
        for t in range(L):
            d = delta[n, t, e]
            dx = d * x[n, t, e]
            acc = 0.0
            for s in range(S):
                hp = h[n, t - 1, e, s] if t > 0 else 0.0
                ht = np.exp(d * A[e, s]) * hp + dx * B[n, t, s]
                h[n, t, e, s] = ht
                acc += C[n, t, s] * ht
            y[n, t, e] = acc


@njit(parallel=True, cache=True)
def _backward(gy, x, delta, A, B, C, h, gx, gdelta, gA_part, gB, gC):
    N, L, E = x.shape
    S = A.shape[1]
    for n in prange(N):
        gh = np.zeros(S, dtype=x.dtype)
        for e in range(E):
            for s in range(S):
                gh[s] = 0.0
            for t in range(L - 1, -1, -1):
                d = delta[n, t, e]
                g = gy[n, t, e]
                gd = 0.0
                gxv = 0.0
                for s in range(S):
                    ghs = g * C[n, t, s] + gh[s]
                    hp = h[n, t - 1, e, s] if t > 0 else 0.0
                    a = np.exp(d * A[e, s])
                    gC[n, t, s] += g * h[n, t, e, s]
                    gha = ghs * hp * a
                    gA_part[n, e, s] += gha * d
                    gd += gha * A[e, s] + ghs * B[n, t, s] * x[n, t, e]
                    gB[n, t, s] += ghs * d * x[n, t, e]
                    gxv += ghs * B[n, t, s]
                    gh[s] = a * ghs
                gdelta[n, t, e] = gd
                gx[n, t, e] = gxv * d


def scan_forward(x, delta, A, B, C):
    x = np.ascontiguousarray(x)
    delta = np.ascontiguousarray(delta)
    A = np.ascontiguousarray(A)
    B = np.ascontiguousarray(B)
    C = np.ascontiguousarray(C)
    N, L, E = x.shape
    S = A.shape[1]
    y = np.empty((N, L, E), dtype=x.dtype)
    h = np.empty((N, L, E, S), dtype=x.dtype)
    _forward(x, delta, A, B, C, y, h)
    return y, h


def scan_backward(gy, x, delta, A, B, C, h):
    gy = np.ascontiguousarray(gy)
    x = np.ascontiguousarray(x)
    delta = np.ascontiguousarray(delta)
    A = np.ascontiguousarray(A)
    B = np.ascontiguousarray(B)
    C = np.ascontiguousarray(C)
    gx = np.empty_like(x)
    gdelta = np.empty_like(delta)
    gA_part = np.zeros((x.shape[0], x.shape[2], A.shape[1]), dtype=x.dtype)
    gB = np.zeros_like(B)
    gC = np.zeros_like(C)
    _backward(gy, x, delta, A, B, C, h, gx, gdelta, gA_part, gB, gC)
    return gx, gdelta, gA_part.sum(axis=0), gB, gC
