"""Depth completion for transparent and reflective tabletop objects.

Dual-branch encoder (windowed attention over RGB-D, residual convolutions
over depth), per-stage soft fusion, a state-space token mixer at the
bottleneck, and an attention-weighted multi-scale decoder, all on a small
numpy autodiff core with optional numba kernels.
"""

__version__ = "0.1.0"

from . import backend, data, functional, harness, losses, metrics, nn, verify
from .model import HDCNet, ModelConfig
from .optim import AdamW
from .tensor import Tensor, backward, no_grad

__all__ = [
    "AdamW",
    "HDCNet",
    "ModelConfig",
    "Tensor",
    "backward",
    "no_grad",
    "backend",
    "data",
    "functional",
    "harness",
    "losses",
    "metrics",
    "nn",
    "verify",
    "__version__",
]
