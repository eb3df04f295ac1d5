"""Training objective: signal regression, caption cross-entropy plus smoothed KL, L1 on V.

    L_signal  = 1/(2N) * sum_i (|y_i - yhat_i| + (y_i - yhat_i)^2)     over N signal values
    CE        = -(1/N) * sum_i log q_i[target_i]                      over N valid tokens
    KL        = sum_i KL(p_i || q_i), averaged over the batch         p_i label-smoothed target
    L_caption = CE + beta * KL
    L_total   = L_signal + L_caption
    L_sparse  = lambda * sum_ij |V_ij|

``L_sparse`` is reported separately; :attr:`LossReport.objective` adds it to
``L_total`` when enabled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import ops
from ..numerics.tensor import ShapeError, Tensor, ensure_tensor

DEFAULT_EPSILON = 0.1
DEFAULT_BETA = 0.5
DEFAULT_LAMBDA = 0.01


def signal_loss(pred, true) -> Tensor:
    pred, true = ensure_tensor(pred), np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ShapeError(f"signal prediction {pred.shape} vs target {true.shape}")
    diff = ops.add(pred, Tensor(-true))
    n = diff.size
    return ops.scale(ops.sum(ops.add(ops.abs(diff), ops.square(diff))), 1.0 / (2 * n))


def sparse_mask_loss(V, lam: float) -> Tensor:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return ops.scale(ops.sum(ops.abs(ensure_tensor(V))), float(lam))


def smoothed_targets(targets: np.ndarray, vocab_size: int, epsilon: float) -> np.ndarray:
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"label smoothing must lie in [0, 1), got {epsilon}")
    p = np.full(targets.shape + (vocab_size,), epsilon / vocab_size)
    np.put_along_axis(p, targets[..., None], 1.0 - epsilon + epsilon / vocab_size, axis=-1)
    return p


@dataclass
class LossReport:
    l_signal: Tensor
    l_ce: Tensor
    l_kl: Tensor
    l_caption: Tensor
    l_sparse: Tensor
    l_total: Tensor
    include_sparse: bool = True

    @property
    def objective(self) -> Tensor:
        return ops.add(self.l_total, self.l_sparse) if self.include_sparse else self.l_total

    def values(self) -> dict[str, float]:
        return {k: float(getattr(self, k).data) for k in
                ("l_signal", "l_ce", "l_kl", "l_caption", "l_sparse", "l_total")}


def training_losses(logits: Tensor, targets, mask, signal_pred=None, signal_true=None,
                    beta: float = DEFAULT_BETA, epsilon: float = DEFAULT_EPSILON,
                    V=None, lam: float = DEFAULT_LAMBDA, include_sparse: bool = True) -> LossReport:
    """Loss stack for logits ``[B, L, vocab]`` against integer ``targets`` ``[B, L]``."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.float64)
    ce = ops.cross_entropy(logits, targets, mask)
    p = smoothed_targets(targets, logits.shape[-1], epsilon)
    kl = ops.scale(ops.kl_div(p, ops.softmax(logits, axis=-1), mask), 1.0 / logits.shape[0])
    caption = ops.add(ce, ops.scale(kl, beta))
    if signal_true is not None:
        sig = signal_loss(signal_pred, signal_true)
    else:
        sig = Tensor(0.0)
    total = ops.add(sig, caption)
    sparse = sparse_mask_loss(V, lam) if V is not None else Tensor(0.0)
    return LossReport(sig, ce, kl, caption, sparse, total, include_sparse)
