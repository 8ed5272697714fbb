"""Kernel backend selection.

Hot numeric kernels (conv2d, selective scan) exist twice: a numba @njit
version and a pure-numpy fallback. `HDC_BACKEND=numpy|numba` picks one at
import time; the default is numba when it imports, numpy otherwise.
`HDC_THREADS` caps numba's op-internal parallelism.
"""

from __future__ import annotations

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

_VALID = ("numba", "numpy")


def _initial_backend() -> str:
    env = os.environ.get("HDC_BACKEND", "").strip().lower()
    if env:
        if env not in _VALID:
            raise ValueError(f"HDC_BACKEND must be one of {_VALID}, got {env!r}")
        if env == "numba" and not HAVE_NUMBA:
            raise RuntimeError("HDC_BACKEND=numba but numba is not importable")
        return env
    return "numba" if HAVE_NUMBA else "numpy"


_active = _initial_backend()


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    """Switch kernel backend at runtime (used by tests and the benchmark)."""
    global _active
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _active = name


class using_backend:
    """Context manager that temporarily selects a kernel backend."""

    def __init__(self, name: str):
        self.name = name
        self._saved = None

    def __enter__(self):
        self._saved = _active
        set_backend(self.name)
        return self

    def __exit__(self, *exc):
        set_backend(self._saved)
        return False


def apply_thread_cap() -> int | None:
    """Apply the HDC_THREADS cap to numba's thread pool. Returns the cap."""
    raw = os.environ.get("HDC_THREADS", "").strip()
    if not raw or not HAVE_NUMBA:
        return None
    n = max(1, int(raw))
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


if HAVE_NUMBA:
    apply_thread_cap()
