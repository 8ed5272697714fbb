"""Selective-scan recurrence, vectorised numpy reference.

Shapes: x/delta [N, L, E], A [E, S], B/C [N, L, S].  The recurrence is

    h_t = exp(delta_t * A) * h_{t-1} + (delta_t * x_t) * B_t
    y_t = sum_s C_t[s] * h_t[:, s]

Forward also returns the full state history h [N, L, E, S]; backward
replays it to propagate through the time recurrence.
"""

from __future__ import annotations

import numpy as np


def scan_forward(x, delta, A, B, C):
    N, L, E = x.shape
    S = A.shape[1]
    h = np.zeros((N, L, E, S), dtype=x.dtype)
    y = np.zeros((N, L, E), dtype=x.dtype)
    hp = np.zeros((N, E, S), dtype=x.dtype)
    for t in range(L):
        a = np.exp(delta[:, t, :, None] * A[None, :, :])
        hp = a * hp + (delta[:, t] * x[:, t])[:, :, None] * B[:, t, None, :]
        h[:, t] = hp
        y[:, t] = (C[:, t, None, :] * hp).sum(axis=2)
    return y, h


def scan_backward(gy, x, delta, A, B, C, h):
    N, L, E = x.shape
    S = A.shape[1]
    gx = np.zeros_like(x)
    gdelta = np.zeros_like(delta)
    gA = np.zeros_like(A)
    gB = np.zeros_like(B)
    gC = np.zeros_like(C)
    carry = np.zeros((N, E, S), dtype=x.dtype)
    zero_prev = np.zeros((N, E, S), dtype=x.dtype)
    for t in range(L - 1, -1, -1):
        gh = gy[:, t, :, None] * C[:, t, None, :] + carry
        h_prev = h[:, t - 1] if t > 0 else zero_prev
        a = np.exp(delta[:, t, :, None] * A[None, :, :])
        gC[:, t] = (gy[:, t, :, None] * h[:, t]).sum(axis=1)
        gha = gh * h_prev * a
        gA += (gha * delta[:, t, :, None]).sum(axis=0)
        gdelta[:, t] = (gha * A[None, :, :]).sum(axis=2) + (
            gh * B[:, t, None, :]
        ).sum(axis=2) * x[:, t]
        gB[:, t] = (gh * (delta[:, t] * x[:, t])[:, :, None]).sum(axis=1)
        gx[:, t] = (gh * B[:, t, None, :]).sum(axis=2) * delta[:, t]
        carry = a * gh
    return gx, gdelta, gA, gB, gC
