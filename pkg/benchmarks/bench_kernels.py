#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy twins.

Covers the runtime-dominant inner loops: conv2d forward/backward and the
selective scan forward/backward, at shapes a desk-scale training step
actually produces.  The first numba call of each kernel is a throwaway so
JIT compilation never lands in a timing.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hdcnet import backend
from hdcnet import _kernels as K


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def conv_cases(rng):
    # (label, x, w, stride, pad, groups): encoder stem, a mid stage, the
    # depthwise conv inside down_fusion
    cases = []
    x = rng.standard_normal((8, 4, 48, 64)).astype(np.float32)
    w = rng.standard_normal((8, 4, 2, 2)).astype(np.float32)
    cases.append(("conv 2x2 s2 stem", x, w, (2, 2), (0, 0), 1))
    x = rng.standard_normal((8, 16, 12, 16)).astype(np.float32)
    w = rng.standard_normal((16, 16, 3, 3)).astype(np.float32)
    cases.append(("conv 3x3 s1 mid", x, w, (1, 1), (1, 1), 1))
    x = rng.standard_normal((8, 128, 6, 8)).astype(np.float32)
    w = rng.standard_normal((128, 1, 3, 3)).astype(np.float32)
    cases.append(("conv 3x3 dw", x, w, (1, 1), (1, 1), 128))
    return cases


def scan_case(rng):
    N, L, E, S = 8, 192, 16, 8
    x = rng.standard_normal((N, L, E)).astype(np.float32)
    delta = np.abs(rng.standard_normal((N, L, E))).astype(np.float32) + 0.1
    A = -np.abs(rng.standard_normal((E, S))).astype(np.float32)
    B = rng.standard_normal((N, L, S)).astype(np.float32)
    C = rng.standard_normal((N, L, S)).astype(np.float32)
    return x, delta, A, B, C


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5, help="timings per kernel, best is kept")
    args = ap.parse_args()

    if not backend.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    rows = []

    for label, x, w, (sh, sw), (ph, pw), groups in conv_cases(rng):
        y = K.conv2d_forward(x, w, sh, sw, ph, pw, groups)
        gy = rng.standard_normal(y.shape).astype(np.float32)
        ops = {
            label: lambda: K.conv2d_forward(x, w, sh, sw, ph, pw, groups),
            label + " gx": lambda: K.conv2d_grad_x(gy, w, x.shape, sh, sw, ph, pw, groups),
            label + " gw": lambda: K.conv2d_grad_w(gy, x, w.shape, sh, sw, ph, pw, groups),
        }
        for name, fn in ops.items():
            with backend.using_backend("numba"):
                fn()  # JIT warmup
                t_nb = _time(fn, args.repeats)
                out_nb = fn()
            with backend.using_backend("numpy"):
                t_np = _time(fn, args.repeats)
                out_np = fn()
            np.testing.assert_allclose(out_nb, out_np, rtol=2e-4, atol=2e-5)
            rows.append((name, t_np, t_nb))

    x, delta, A, B, C = scan_case(rng)
    with backend.using_backend("numpy"):
        y, h = K.scan_forward(x, delta, A, B, C)
    gy = rng.standard_normal(y.shape).astype(np.float32)
    ops = {
        "scan fwd": lambda: K.scan_forward(x, delta, A, B, C)[0],
        "scan bwd": lambda: K.scan_backward(gy, x, delta, A, B, C, h)[0],
    }
    for name, fn in ops.items():
        with backend.using_backend("numba"):
            fn()
            t_nb = _time(fn, args.repeats)
            out_nb = fn()
        with backend.using_backend("numpy"):
            t_np = _time(fn, args.repeats)
            out_np = fn()
        np.testing.assert_allclose(out_nb, out_np, rtol=2e-4, atol=2e-5)
        rows.append((name, t_np, t_nb))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  speedup")
    for name, t_np, t_nb in rows:
        print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms  {t_np / t_nb:>6.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
