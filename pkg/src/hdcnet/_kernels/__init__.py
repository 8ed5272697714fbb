"""Kernel dispatch.

Every kernel exists twice with identical signatures: a numpy reference in
*_numpy.py and a numba twin in *_numba.py.  Dispatch happens per call so
`using_backend` can flip implementations mid-process.
"""

from __future__ import annotations

from .. import backend
from . import conv_numpy, scan_numpy

if backend.HAVE_NUMBA:
    from . import conv_numba, scan_numba
else:  # pragma: no cover - exercised only on numba-free installs
    conv_numba = None
    scan_numba = None


def _conv_mod():
    if backend.active_backend() == "numba":
        return conv_numba
    return conv_numpy


def _scan_mod():
    if backend.active_backend() == "numba":
        return scan_numba
    return scan_numpy


def conv2d_forward(x, w, sh, sw, ph, pw, groups=1):
    return _conv_mod().conv2d_forward(x, w, sh, sw, ph, pw, groups)


def conv2d_grad_x(gy, w, x_shape, sh, sw, ph, pw, groups=1):
    return _conv_mod().conv2d_grad_x(gy, w, x_shape, sh, sw, ph, pw, groups)


def conv2d_grad_w(gy, x, w_shape, sh, sw, ph, pw, groups=1):
    return _conv_mod().conv2d_grad_w(gy, x, w_shape, sh, sw, ph, pw, groups)


def scan_forward(x, delta, A, B, C):
    return _scan_mod().scan_forward(x, delta, A, B, C)


def scan_backward(gy, x, delta, A, B, C, h):
    return _scan_mod().scan_backward(gy, x, delta, A, B, C, h)
