"""Causal analysis: fuse start/end/whole-clip features, weight them, gate a residual carrier.

With whole-feature width ``K`` (``F*C/2``) and ``S`` spatial windows:

    F_init = W_Xs (g_init + l_init)              [B, K, S]
    F_end  = W_Xe (g_end + l_end)                [B, K, S]
    F_pot  = W_w  [g_whole ; l_whole]            [B, K, S]
    F_act  = W_Y  [g_whole ; l_whole]            [B, K, S]
    F_ori  = W_o  [g_whole ; l_whole]            [B, 8K, S]
    H      = [F_init ; F_end ; F_pot ; F_act]    [B, 4K, S]
    alpha  = softmax(W_H H + b_H)                [B, 8K, S]
    F      = alpha * F_ori                       [B, 8K, S]

``[a ; b]`` stacks along channels and every ``W`` acts on the channel axis at
each position.  The output width ``8K = 4*F*C``.  By default the softmax runs
over the spatial axis, so for every channel ``alpha`` is a distribution over
windows and its mass can be read per rendered region; ``alpha_axis="channel"``
normalises over channels instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mfe.extractor import FeatureBundle, channel_linear
from ..numerics import ops
from ..numerics.nn import Module, Parameter, glorot
from ..numerics.tensor import ShapeError, Tensor

ALPHA_AXES = {"spatial": 2, "channel": 1}


@dataclass
class CausalOutput:
    feature: Tensor      # [B, 8K, S]
    alpha: Tensor        # [B, 8K, S]


def _weight(rng, n_in: int, n_out: int) -> Parameter:
    return Parameter(glorot(rng, (n_in, n_out)))


class CausalAnalysis(Module):
    def __init__(self, rng: np.random.Generator, k: int, alpha_axis: str = "spatial"):
        if alpha_axis not in ALPHA_AXES:
            raise ValueError(f"alpha_axis must be one of {sorted(ALPHA_AXES)}, got {alpha_axis!r}")
        self.k = k
        self.alpha_axis = alpha_axis
        self.W_Xs = _weight(rng, k, k)
        self.W_Xe = _weight(rng, k, k)
        self.W_w = _weight(rng, 2 * k, k)
        self.W_Y = _weight(rng, 2 * k, k)
        self.W_o = _weight(rng, 2 * k, 8 * k)
        # zero start: alpha begins uniform and moves only where the loss pushes it
        self.W_H = Parameter(np.zeros((4 * k, 8 * k)))
        self.b_H = Parameter(np.zeros(8 * k))

    def _check(self, bundle: FeatureBundle) -> None:
        if bundle.shape[1] != self.k:
            raise ShapeError(f"bundle has {bundle.shape[1]} channels, module expects {self.k}")

    def fuse_init_end(self, bundle: FeatureBundle) -> tuple[Tensor, Tensor]:
        self._check(bundle)
        f_init = channel_linear(ops.add(bundle.init_global, bundle.init_local), self.W_Xs)
        f_end = channel_linear(ops.add(bundle.end_global, bundle.end_local), self.W_Xe)
        return f_init, f_end

    def fuse_whole(self, bundle: FeatureBundle) -> tuple[Tensor, Tensor, Tensor]:
        self._check(bundle)
        pair = ops.concat([bundle.whole_global, bundle.whole_local], axis=1)
        return (channel_linear(pair, self.W_w), channel_linear(pair, self.W_Y),
                channel_linear(pair, self.W_o))

    def attend_and_gate(self, f_init: Tensor, f_end: Tensor, f_pot: Tensor, f_act: Tensor,
                        f_ori: Tensor) -> CausalOutput:
        shapes = {f_init.shape, f_end.shape, f_pot.shape, f_act.shape}
        if len(shapes) != 1:
            raise ShapeError(f"attend_and_gate: H parts disagree in shape: {sorted(shapes)}")
        h = ops.concat([f_init, f_end, f_pot, f_act], axis=1)
        expect = (h.shape[0], 2 * h.shape[1], h.shape[2])
        if f_ori.shape != expect:
            raise ShapeError(f"attend_and_gate: F_ori {f_ori.shape} must be {expect}")
        logits = channel_linear(h, self.W_H, self.b_H)
        alpha = ops.softmax(logits, axis=ALPHA_AXES[self.alpha_axis])
        return CausalOutput(ops.mul(alpha, f_ori), alpha)

    def __call__(self, bundle: FeatureBundle) -> CausalOutput:
        f_init, f_end = self.fuse_init_end(bundle)
        f_pot, f_act, f_ori = self.fuse_whole(bundle)
        return self.attend_and_gate(f_init, f_end, f_pot, f_act, f_ori)


def window_mass(alpha: np.ndarray) -> np.ndarray:
    """Share of attention per window, ``[B, S]``: channel-averaged and normalised to 1."""
    a = np.asarray(alpha.data if isinstance(alpha, Tensor) else alpha)
    m = a.mean(axis=1)
    return m / m.sum(axis=-1, keepdims=True)
