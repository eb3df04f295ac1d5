"""Central finite-difference verification of autograd gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


class NonDeterministicError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors.values())

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"grad_check {status}: max rel err {self.max_error:.3e} (tol {self.tolerance:g})"


def numeric_grad(fn: Callable[[], Tensor], p: Tensor, h: float = 1e-5,
                 coords: np.ndarray | None = None) -> np.ndarray:
    """Central differences of ``fn()`` w.r.t. ``p`` at the flat indices ``coords``."""
    flat = p.data.reshape(-1)
    idx = np.arange(flat.size) if coords is None else coords
    out = np.zeros(len(idx))
    for k, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn().data)
        flat[i] = orig - h
        fm = float(fn().data)
        flat[i] = orig
        out[k] = (fp - fm) / (2 * h)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """Max abs difference scaled by the larger gradient magnitude of the pair.

    Scaling by the per-parameter magnitude rather than elementwise avoids
    blow-ups on components whose true gradient is ~0.  The scale never drops
    below ``floor``: central differences at h = 1e-5 carry round-off of about
    ``eps * |f| / h``, roughly 1e-10 for losses of order one, so an exactly zero
    gradient must not be judged relative to that noise.
    """
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0),
                floor)
    diff = np.max(np.abs(analytic - numeric), initial=0.0)
    return float(diff / scale)


def grad_check(model_fn: Callable[[], Tensor], params: Mapping[str, Tensor],
               tolerance: float = 1e-4, h: float = 1e-5, max_coords: int | None = None,
               rng: np.random.Generator | None = None,
               grad_hook: Callable[[str, np.ndarray], np.ndarray] | None = None) -> GradCheckReport:
    """Compare autograd against central differences for every parameter.

    Args:
        model_fn: zero-argument callable returning a scalar tensor; it must read
            the parameter arrays in ``params`` (perturbed in place).
        params: name -> tensor (64-bit recommended).
        max_coords: if set, check this many random coordinates per parameter.
        grad_hook: optional transform applied to each analytic gradient before
            comparison; used for negative controls.
    """
    first = float(model_fn().data)
    second = float(model_fn().data)
    if first != second:
        raise NonDeterministicError(f"model_fn is not deterministic: {first!r} != {second!r}")

    for p in params.values():
        p.grad = None
    loss = model_fn()
    loss.backward()

    rng = rng or np.random.default_rng(0)
    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        analytic = np.zeros(p.size) if p.grad is None else p.grad.reshape(-1).astype(np.float64)
        if grad_hook is not None:
            analytic = grad_hook(name, analytic)
        coords = None
        if max_coords is not None and p.size > max_coords:
            coords = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        num = numeric_grad(model_fn, p, h=h, coords=coords)
        ana = analytic if coords is None else analytic[coords]
        report.errors[name] = relative_error(ana, num)
        p.grad = None
    return report
