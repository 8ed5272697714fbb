"""Reverse-mode autodiff on numpy arrays.

A Tensor wraps one ndarray.  Ops in :mod:`hdcnet.functional` record a
closure that routes the output gradient to the parents; ``backward`` walks
the recorded graph once in reverse topological order.  Data is float32 by
default; float64 graphs work too and are used by the finite-difference
checker.
"""

from __future__ import annotations

import numpy as np

_grad_enabled = True


def grad_enabled() -> bool:
    return _grad_enabled


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, (np.ndarray, np.floating)) and data.dtype in (
            np.float32,
            np.float64,
        ):
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g: np.ndarray):
        self.grad = g if self.grad is None else self.grad + g

    def backward(self):
        """Run one reverse pass from this tensor, seeding with ones.

        Interior gradients are freed as soon as they have been consumed;
        only leaf tensors keep ``.grad``.  A graph can be walked once.
        """
        if not self.requires_grad:
            raise RuntimeError("backward on a tensor that does not require grad")
        if self.data.size != 1:
            raise RuntimeError(f"backward needs a scalar loss, got shape {self.data.shape}")
        if self._done:
            raise RuntimeError("backward called twice on the same graph")

        # iterative DFS postorder; reversed it is a topological order, so a
        # node's backward runs only after every consumer has contributed
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None:
                continue
            node._backward(node.grad)
            node.grad = None
        self._done = True

    # arithmetic delegates to the op catalogue (imported at module end)
    def __add__(self, other):
        return _F.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return _F.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return _F.sub(self, other)

    def __rsub__(self, other):
        return _F.sub(other, self)

    def __truediv__(self, other):
        return _F.div(self, other)

    def __rtruediv__(self, other):
        return _F.div(other, self)

    def __neg__(self):
        return _F.neg(self)

    def __matmul__(self, other):
        return _F.matmul(self, other)

    def __pow__(self, p):
        return _F.pow(self, p)

    def sum(self, axis=None, keepdims=False):
        return _F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _F.reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _F.permute(self, axes)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


def _make(data: np.ndarray, parents, backward) -> Tensor:
    """Internal: wrap an op result with its gradient closure."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = True
    out._parents = tuple(p for p in parents if p.requires_grad)
    out._backward = backward
    out._done = False
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverses numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor, params=()):
    """Backward pass that also zero-fills grads of unreached parameters."""
    loss.backward()
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


from . import functional as _F  # noqa: E402  (cycle resolved at import end)
