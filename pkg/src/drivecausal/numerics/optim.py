"""Plain stochastic gradient descent."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class OptState:
    learning_rate: float
    step_count: int = 0
    # SGD keeps no per-parameter accumulators; the slot exists for the checkpoint layout.
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")


def grad_norm(params: Mapping[str, Tensor]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params.values())))


def optimizer_step(params: Mapping[str, Tensor], opt: OptState,
                   clip_norm: float | None = None,
                   lr_scale: Mapping[str, float] | None = None) -> float:
    """``p <- p - lr * grad`` for every parameter, then clear the gradients.

    With ``clip_norm`` the gradients are first rescaled so their global L2
    norm does not exceed it.  ``lr_scale`` multiplies the step of the named
    parameters.  Returns the norm before clipping.
    """
    lr_scale = lr_scale or {}
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise RuntimeError(f"no gradient for parameter(s): {', '.join(missing)}")
    norm = grad_norm(params)
    factor = clip_norm / norm if clip_norm is not None and norm > clip_norm else 1.0
    for name, p in params.items():
        step = opt.learning_rate * factor * lr_scale.get(name, 1.0)
        p.data = (p.data - step * p.grad).astype(p.data.dtype, copy=False)
        p.grad = None
    opt.step_count += 1
    return norm


class SGD:
    def __init__(self, params: Mapping[str, Tensor], lr: float, clip_norm: float | None = None,
                 lr_scale: Mapping[str, float] | None = None):
        self.params = dict(params)
        self.state = OptState(learning_rate=lr)
        self.clip_norm = clip_norm
        unknown = set(lr_scale or {}) - set(self.params)
        if unknown:
            raise KeyError(f"lr_scale names unknown parameters: {sorted(unknown)}")
        self.lr_scale = dict(lr_scale or {})

    @property
    def lr(self) -> float:
        return self.state.learning_rate

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.learning_rate = float(value)

    def step(self) -> float:
        return optimizer_step(self.params, self.state, self.clip_norm, self.lr_scale)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
