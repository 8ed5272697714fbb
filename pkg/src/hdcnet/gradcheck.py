"""Finite-difference gradient checking.

The oracle runs in float64: central differences at eps and eps/2.  A
coordinate whose two slopes disagree sits on (or numerically near) a kink
such as relu's corner or a max tie; those coordinates are excluded rather
than compared, with a cap on how many may be excluded before the check
itself fails.  Everywhere else the analytic gradient must match the
eps/2 slope within ``rtol``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, no_grad

EPS_DEFAULT = 1e-3
RTOL_DEFAULT = 1e-4
_KINK_TOL = 1e-3


@dataclass
class GradcheckResult:
    ok: bool
    max_rel_err: float
    n_checked: int
    n_excluded: int
    failures: list = field(default_factory=list)

    def message(self) -> str:
        if self.ok:
            return (
                f"gradcheck ok: {self.n_checked} coords, "
                f"max rel err {self.max_rel_err:.2e}, {self.n_excluded} kink-excluded"
            )
        lines = [
            f"gradcheck FAILED: {len(self.failures)} of {self.n_checked} coords "
            f"(max rel err {self.max_rel_err:.2e}, {self.n_excluded} excluded)"
        ]
        for tname, i, a, s in self.failures[:8]:
            lines.append(f"  {tname}[{i}]: analytic {a:.6g} vs numeric {s:.6g}")
        return "\n".join(lines)


def gradcheck(
    f,
    tensors,
    eps: float = EPS_DEFAULT,
    rtol: float = RTOL_DEFAULT,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
    max_kink_frac: float = 0.1,
    names=None,
) -> GradcheckResult:
    """Compare analytic grads of scalar ``f()`` against finite differences.

    ``tensors`` are the float64 leaves to perturb.  ``sample`` limits the
    check to that many coordinates per tensor (seeded via ``rng``);
    ``None`` checks every coordinate.
    """
    tensors = list(tensors)
    for t in tensors:
        if t.data.dtype != np.float64:
            raise ValueError("gradcheck requires float64 leaves (use .astype)")
        if not t.data.flags.writeable:
            raise ValueError("gradcheck needs writable leaf data")
        t.grad = None
    if names is None:
        names = [f"t{k}" for k in range(len(tensors))]

    loss = f()
    if loss.data.size != 1:
        raise ValueError("gradcheck loss must be scalar")
    loss.backward()
    grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def loss_at() -> float:
        with no_grad():
            return float(f().data)

    failures = []
    max_rel = 0.0
    n_checked = 0
    n_excluded = 0
    for k, t in enumerate(tensors):
        size = t.data.size
        if sample is not None and sample < size:
            if rng is None:
                raise ValueError("sampled gradcheck needs an rng")
            idxs = np.sort(rng.choice(size, size=sample, replace=False))
        else:
            idxs = range(size)
        gflat = grads[k].ravel()
        for i in idxs:
            pos = np.unravel_index(i, t.data.shape)
            orig = t.data[pos]
            t.data[pos] = orig + eps
            lp = loss_at()
            t.data[pos] = orig - eps
            lm = loss_at()
            t.data[pos] = orig + eps / 2
            lp2 = loss_at()
            t.data[pos] = orig - eps / 2
            lm2 = loss_at()
            t.data[pos] = orig
            s1 = (lp - lm) / (2 * eps)
            s2 = (lp2 - lm2) / eps
            n_checked += 1
            if abs(s1 - s2) > _KINK_TOL * max(1.0, abs(s1), abs(s2)):
                n_excluded += 1
                continue
            a = float(gflat[i])
            rel = abs(a - s2) / max(1.0, abs(a), abs(s2))
            max_rel = max(max_rel, rel)
            if rel > rtol:
                failures.append((names[k], int(i), a, s2))

    kink_cap = max(1, int(max_kink_frac * n_checked))
    ok = not failures and n_excluded <= kink_cap
    if n_excluded > kink_cap:
        failures.append(("<kinks>", n_excluded, float("nan"), float("nan")))
    return GradcheckResult(ok, max_rel, n_checked, n_excluded, failures)


def leaves_like(arrays, requires_grad: bool = True):
    """Wrap float64 copies of ``arrays`` as graph leaves."""
    out = []
    for a in arrays:
        out.append(Tensor(np.asarray(a, dtype=np.float64).copy(), requires_grad=requires_grad))
    return out
