"""AdamW with decoupled weight decay.

Decay multiplies parameters by (1 - lr*wd) before the bias-corrected
Adam update.  A step with any non-finite gradient is rejected whole:
no parameter moves, the step counter stays put, and a diagnostic is
logged.
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger("hdcnet")


class AdamW:
    def __init__(
        self,
        params,
        lr: float = 1e-3,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = list(params)
        if not self.params:
            raise ValueError("optimizer got no parameters")
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self) -> bool:
        """Apply one update.  Returns False (and changes nothing) if any
        gradient contains a non-finite value."""
        grads = []
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                log.warning("adamw: non-finite gradient in parameter %d, step rejected", i)
                return False
            grads.append(g)
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        decay = 1.0 - self.lr * self.wd
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            step = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data * decay - step.astype(p.data.dtype)
        return True
