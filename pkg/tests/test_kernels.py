"""Numba and numpy kernel twins must agree on the same inputs."""

import os
import subprocess
import sys

import numpy as np
import pytest

from hdcnet import _kernels, backend

needs_numba = pytest.mark.skipif(not backend.HAVE_NUMBA, reason="numba not installed")


def _conv_inputs(seed, n, ci, h, w, co, kh, kw, groups=1):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, ci, h, w)).astype(np.float32)
    wt = rng.standard_normal((co, ci // groups, kh, kw)).astype(np.float32)
    return x, wt


# (n, ci, h, w, co, kh, kw, sh, sw, ph, pw, groups)
CONV_CASES = [
    pytest.param((2, 3, 8, 10, 4, 3, 3, 1, 1, 1, 1, 1), id="3x3-pad"),
    pytest.param((2, 4, 12, 16, 8, 2, 2, 2, 2, 0, 0, 1), id="2x2-stride2"),
    pytest.param((1, 6, 9, 9, 6, 3, 3, 1, 1, 1, 1, 6), id="depthwise"),
    pytest.param((2, 8, 6, 8, 4, 1, 1, 1, 1, 0, 0, 2), id="grouped-1x1"),
    pytest.param((1, 2, 7, 7, 3, 3, 3, 2, 2, 1, 1, 1), id="stride2-pad1"),
]


@needs_numba
@pytest.mark.parametrize("case", CONV_CASES)
def test_conv_forward_parity(case):
    n, ci, h, w, co, kh, kw, sh, sw, ph, pw, g = case
    x, wt = _conv_inputs(0, n, ci, h, w, co, kh, kw, g)
    with backend.using_backend("numpy"):
        ref = _kernels.conv2d_forward(x, wt, sh, sw, ph, pw, g)
    with backend.using_backend("numba"):
        out = _kernels.conv2d_forward(x, wt, sh, sw, ph, pw, g)
    np.testing.assert_allclose(out, ref, rtol=2e-5, atol=2e-6)


@needs_numba
@pytest.mark.parametrize("case", CONV_CASES)
def test_conv_backward_parity(case):
    n, ci, h, w, co, kh, kw, sh, sw, ph, pw, g = case
    x, wt = _conv_inputs(1, n, ci, h, w, co, kh, kw, g)
    with backend.using_backend("numpy"):
        y = _kernels.conv2d_forward(x, wt, sh, sw, ph, pw, g)
    gy = np.random.default_rng(2).standard_normal(y.shape).astype(np.float32)
    with backend.using_backend("numpy"):
        gx_ref = _kernels.conv2d_grad_x(gy, wt, x.shape, sh, sw, ph, pw, g)
        gw_ref = _kernels.conv2d_grad_w(gy, x, wt.shape, sh, sw, ph, pw, g)
    with backend.using_backend("numba"):
        gx = _kernels.conv2d_grad_x(gy, wt, x.shape, sh, sw, ph, pw, g)
        gw = _kernels.conv2d_grad_w(gy, x, wt.shape, sh, sw, ph, pw, g)
    np.testing.assert_allclose(gx, gx_ref, rtol=2e-5, atol=2e-6)
    np.testing.assert_allclose(gw, gw_ref, rtol=2e-4, atol=2e-5)


def _scan_inputs(seed, n=2, length=24, e=6, s=4):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, length, e)).astype(np.float32)
    delta = (np.abs(rng.standard_normal((n, length, e))) * 0.2 + 0.05).astype(np.float32)
    A = (-np.abs(rng.standard_normal((e, s))) - 0.1).astype(np.float32)
    B = rng.standard_normal((n, length, s)).astype(np.float32)
    C = rng.standard_normal((n, length, s)).astype(np.float32)
    return x, delta, A, B, C


@needs_numba
def test_scan_forward_parity():
    x, delta, A, B, C = _scan_inputs(3)
    with backend.using_backend("numpy"):
        y_ref, h_ref = _kernels.scan_forward(x, delta, A, B, C)
    with backend.using_backend("numba"):
        y, h = _kernels.scan_forward(x, delta, A, B, C)
    np.testing.assert_allclose(y, y_ref, rtol=2e-5, atol=2e-6)
    np.testing.assert_allclose(h, h_ref, rtol=2e-5, atol=2e-6)


@needs_numba
def test_scan_backward_parity():
    x, delta, A, B, C = _scan_inputs(4)
    with backend.using_backend("numpy"):
        y, h = _kernels.scan_forward(x, delta, A, B, C)
    gy = np.random.default_rng(5).standard_normal(y.shape).astype(np.float32)
    with backend.using_backend("numpy"):
        ref = _kernels.scan_backward(gy, x, delta, A, B, C, h)
    with backend.using_backend("numba"):
        got = _kernels.scan_backward(gy, x, delta, A, B, C, h)
    for g, r, name in zip(got, ref, ("gx", "gdelta", "gA", "gB", "gC")):
        np.testing.assert_allclose(g, r, rtol=2e-4, atol=2e-5, err_msg=name)


def test_using_backend_restores():
    before = backend.active_backend()
    with backend.using_backend("numpy"):
        assert backend.active_backend() == "numpy"
    assert backend.active_backend() == before


def test_using_backend_restores_on_error():
    before = backend.active_backend()
    with pytest.raises(RuntimeError):
        with backend.using_backend("numpy"):
            raise RuntimeError("boom")
    assert backend.active_backend() == before


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError, match="numba.*numpy|numpy.*numba"):
        backend.set_backend("cuda")


def test_env_var_selects_backend():
    # fresh interpreter so import-time selection is exercised
    env = dict(os.environ, HDC_BACKEND="numpy")
    out = subprocess.run(
        [sys.executable, "-c", "import hdcnet; print(hdcnet.backend.active_backend())"],
        capture_output=True,
        text=True,
        env=env,
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip().endswith("numpy")


def test_env_var_rejects_garbage():
    env = dict(os.environ, HDC_BACKEND="gpu")
    out = subprocess.run(
        [sys.executable, "-c", "import hdcnet"],
        capture_output=True,
        text=True,
        env=env,
    )
    assert out.returncode != 0
    assert "HDC_BACKEND" in out.stderr
