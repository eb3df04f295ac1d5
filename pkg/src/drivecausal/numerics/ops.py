"""Differentiable operations on :class:`~drivecausal.numerics.tensor.Tensor`.

Every function validates shapes up front and raises :class:`ShapeError`
naming both operands.  Broadcasting is limited to axes of size one on
operands of equal rank; anything else needs an explicit reshape.
"""
from __future__ import annotations

import builtins
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, ensure_tensor, make_result

LOG_FLOOR = 1e-12


def _broadcast_shape(a: tuple, b: tuple, op: str) -> tuple:
    if len(a) != len(b):
        raise ShapeError(f"{op}: rank mismatch between shapes {a} and {b}; reshape explicitly")
    out = []
    for da, db in zip(a, b):
        if da == db or db == 1:
            out.append(da)
        elif da == 1:
            out.append(db)
        else:
            raise ShapeError(f"{op}: shapes {a} and {b} do not conform")
    return tuple(out)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    if a.shape != b.shape:
        _broadcast_shape(a.shape, b.shape, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    if a.shape != b.shape:
        _broadcast_shape(a.shape, b.shape, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), backward, "mul")


def neg(x: Tensor) -> Tensor:
    return make_result(-x.data, (x,), lambda g: (-g,), "neg")


def scale(x: Tensor, c: float) -> Tensor:
    return make_result(x.data * c, (x,), lambda g: (g * c,), "scale")


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return make_result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0).astype(x.dtype), (x,),
                       lambda g: (g * mask,), "relu")


_GELU_K = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU; smooth everywhere, which keeps grad checks clean."""
    v = x.data
    v2 = v * v                      # explicit products: float ** 3 is far slower in numpy
    inner = _GELU_K * v * (1.0 + 0.044715 * v2)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward(g):
        d_inner = _GELU_K * (1.0 + 3 * 0.044715 * v2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return make_result(out, (x,), backward, "gelu")


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """``a @ b`` for a weight matrix ``b`` (2-D) or a batch with equal leading dims."""
    a, b = ensure_tensor(a), ensure_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} @ {b.shape}")
    if b.ndim == 2:
        k, m = b.shape

        def backward(g):
            ga = g @ b.data.T
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
            return ga, gb

        return make_result(a.data @ b.data, (a, b), backward, "matmul")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ for {a.shape} @ {b.shape}")

    def backward_batched(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return make_result(a.data @ b.data, (a, b), backward_batched, "bmm")


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    if b.ndim != 1 or b.shape[0] != x.shape[-1]:
        raise ShapeError(f"bias_add: bias {b.shape} does not match last axis of {x.shape}")
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        return g, g.sum(axis=lead)

    return make_result(x.data + b.data, (x, b), backward, "bias_add")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return bias_add(y, b) if b is not None else y


# -- structural ----------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [ensure_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    ref = tensors[0].shape
    axis = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
                i != axis and d1 != d2 for i, (d1, d2) in enumerate(zip(ref, t.shape))):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis),
                       tensors, backward, "concat")


def getitem(x: Tensor, index) -> Tensor:
    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def backward(g):
        gx = np.zeros_like(x.data)
        if fancy:
            np.add.at(gx, index, g)       # accumulates when an index repeats
        else:
            gx[index] = g
        return (gx,)

    return make_result(np.array(x.data[index]), (x,), backward, "getitem")


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    axis = axis % x.ndim
    if builtins.sum(sizes) != x.shape[axis]:
        raise ShapeError(f"split: sizes {list(sizes)} do not sum to axis {axis} of {x.shape}")
    out, start = [], 0
    for s in sizes:
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(start, start + s)
        out.append(getitem(x, tuple(idx)))
        start += s
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from exc
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation for shape {x.shape}")
    inv = tuple(np.argsort(axes))
    return make_result(np.transpose(x.data, axes), (x,),
                       lambda g: (np.transpose(g, inv),), "permute")


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# -- convolution -----------------------------------------------------------

def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, int):
        return (v, v, v)
    v = tuple(int(i) for i in v)
    if len(v) != 3:
        raise ValueError(f"expected 3 values, got {v}")
    return v


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Channels-last 3-D convolution.

    Args:
        x: input ``[B, T, H, W, Cin]``.
        w: kernel ``[kt, kh, kw, Cin, Cout]``.
        b: optional bias ``[Cout]``.
        stride, padding: int or (t, h, w) triple; padding is zeros on both sides.

    Returns:
        ``[B, To, Ho, Wo, Cout]`` with ``To = (T + 2*pt - kt) // st + 1`` etc.
    """
    if x.ndim != 5 or w.ndim != 5 or x.shape[-1] != w.shape[3]:
        raise ShapeError(f"conv3d: input {x.shape} and kernel {w.shape} do not conform")
    st, sh, sw = _triple(stride)
    pt, ph, pw = _triple(padding)
    kt, kh, kw, ci, co = w.shape
    B, T, H, W, _ = x.shape
    To, Ho, Wo = (T + 2 * pt - kt) // st + 1, (H + 2 * ph - kh) // sh + 1, (W + 2 * pw - kw) // sw + 1
    if min(To, Ho, Wo) < 1:
        raise ShapeError(f"conv3d: kernel {w.shape[:3]} larger than padded input {x.shape}")
    K = kt * kh * kw
    patchify = (pt, ph, pw) == (0, 0, 0) and (kt, kh, kw) == (st, sh, sw) \
        and (T, H, W) == (To * kt, Ho * kh, Wo * kw)
    if patchify:
        cols = x.data.reshape(B, To, kt, Ho, kh, Wo, kw, ci) \
            .transpose(0, 1, 3, 5, 2, 4, 6, 7).reshape(B * To * Ho * Wo, K * ci)
    else:
        xp = np.pad(x.data, ((0, 0), (pt, pt), (ph, ph), (pw, pw), (0, 0)))
        win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
        win = win[:, ::st, ::sh, ::sw][:, :To, :Ho, :Wo]
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 3, 5, 6, 7, 4)) \
            .reshape(B * To * Ho * Wo, K * ci)
    w2 = w.data.reshape(K * ci, co)
    out = cols @ w2
    if b is not None:
        if b.shape != (co,):
            raise ShapeError(f"conv3d: bias {b.shape} does not match {co} output channels")
        out = out + b.data
    out = out.reshape(B, To, Ho, Wo, co)

    def backward(g):
        g2 = g.reshape(-1, co)
        gw = (cols.T @ g2).reshape(w.shape)
        gcols = (g2 @ w2.T).reshape(B, To, Ho, Wo, kt, kh, kw, ci)
        if patchify:
            gx = gcols.transpose(0, 1, 4, 2, 5, 3, 6, 7).reshape(x.shape)
        else:
            gxp = np.zeros((B, T + 2 * pt, H + 2 * ph, W + 2 * pw, ci), dtype=g.dtype)
            for a in range(kt):
                for bb in range(kh):
                    for c in range(kw):
                        gxp[:, a:a + st * (To - 1) + 1:st, bb:bb + sh * (Ho - 1) + 1:sh,
                            c:c + sw * (Wo - 1) + 1:sw, :] += gcols[:, :, :, :, a, bb, c, :]
            gx = gxp[:, pt:pt + T, ph:ph + H, pw:pw + W, :]
        grads = [gx, gw]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return make_result(out, parents, backward, "conv3d")


def conv1x1(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """1x1x1 convolution on a channels-last tensor: a per-position linear map."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"conv1x1: input {x.shape} and weight {w.shape} do not conform")
    return linear(x, w, b)


# -- normalisation / embedding --------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm: affine params {gamma.shape}/{beta.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        dxhat = g * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


def embedding(ids, table: Tensor) -> Tensor:
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("embedding: ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding: id out of range for table {table.shape}")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return make_result(table.data[ids], (table,), backward, "embedding")


# -- probabilistic ---------------------------------------------------------

def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} invalid for shape {x.shape}")
    axis %= x.ndim
    if x.shape[axis] == 0:
        raise ShapeError(f"softmax over empty axis {axis} of shape {x.shape}")
    return axis


def _softmax_np(v: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis)
    s = _softmax_np(x.data, axis)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_result(s, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    s = np.exp(out)

    def backward(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (x,), backward, "log_softmax")


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` over valid positions."""
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    V = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise IndexError(f"cross_entropy: target id outside [0, {V})")
    m = np.ones(targets.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    if m.shape != targets.shape:
        raise ShapeError(f"cross_entropy: mask {m.shape} vs targets {targets.shape}")
    n = m.sum()
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(picked * m).sum() / n if n > 0 else 0.0

    def backward(g):
        if n == 0:
            return (np.zeros_like(logits.data),)
        grad = np.exp(logp)
        np.put_along_axis(grad, targets[..., None],
                          np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
        return ((grad * (m / n)[..., None] * g).astype(logits.dtype),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "cross_entropy")


def check_distribution(p: np.ndarray, tol: float = 1e-5, what: str = "distribution") -> None:
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol) or np.any(p < 0):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"{what} does not sum to 1 within {tol} (max deviation {worst:.3g})")


def kl_div(p_target, q: Tensor, mask=None) -> Tensor:
    """Sum over positions of KL(p_target || q); logs are clamped at 1e-12.

    ``p_target`` is a constant array of distributions, ``q`` a tensor of
    predicted probabilities with the same shape.
    """
    p = np.asarray(p_target, dtype=q.dtype)
    if p.shape != q.shape:
        raise ShapeError(f"kl_div: target {p.shape} vs prediction {q.shape}")
    check_distribution(p, what="target distribution")
    check_distribution(q.data, what="predicted distribution")
    m = np.ones(p.shape[:-1]) if mask is None else np.asarray(mask, dtype=np.float64)
    qc = np.maximum(q.data, LOG_FLOOR)
    terms = p * (np.log(np.maximum(p, LOG_FLOOR)) - np.log(qc))
    loss = (terms.sum(axis=-1) * m).sum()

    def backward(g):
        gq = np.where(q.data > LOG_FLOOR, -p / qc, 0.0) * m[..., None]
        return ((gq * g).astype(q.dtype),)

    return make_result(np.asarray(loss, dtype=q.dtype), (q,), backward, "kl_div")
