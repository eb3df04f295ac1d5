"""Parameters, a minimal module container, and initialisers."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor


class Parameter(Tensor):
    """A named leaf tensor that the optimizer updates."""

    __slots__ = ()

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)


class Module:
    """Attribute-based parameter registry.

    Parameters and sub-modules assigned as attributes (or held in lists)
    are discovered by :meth:`named_parameters`, which yields dotted names in
    attribute-insertion order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for name, p in self.named_parameters():
            if name in out:
                raise ValueError(f"duplicate parameter name {name!r}")
            p.name = name
            out[name] = p
        return out

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for p in self.parameters().values():
            p.data = p.data.astype(dtype)
        return self


def _walk(value, name: str):
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{name}.{i}")


def glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int | None = None,
           fan_out: int | None = None) -> np.ndarray:
    fan_in = fan_in if fan_in is not None else int(np.prod(shape[:-1]))
    fan_out = fan_out if fan_out is not None else shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, bias: bool = True):
        self.weight = Parameter(glorot(rng, (n_in, n_out)))
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        from . import ops
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        from . import ops
        return ops.layer_norm(x, self.gamma, self.beta)


NEG_INF = -1e9  # additive mask value; stays finite so tensors never carry inf


def attention(q: Tensor, k: Tensor, v: Tensor, bias=None) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention over the second-to-last axis.

    ``q`` is ``[..., Lq, D]``, ``k``/``v`` are ``[..., Lk, D]``; ``bias`` is an
    optional additive term broadcastable to ``[..., Lq, Lk]`` (array or tensor).
    Returns the attended values and the attention weights.
    """
    from . import ops
    lead = tuple(range(k.ndim - 2))
    kt = ops.permute(k, lead + (k.ndim - 1, k.ndim - 2))
    scores = ops.scale(ops.matmul(q, kt), 1.0 / np.sqrt(q.shape[-1]))
    if bias is not None:
        scores = ops.add(scores, bias)
    weights = ops.softmax(scores, axis=-1)
    return ops.matmul(weights, v), weights


class MultiHeadAttention(Module):
    """Self-attention with ``heads`` heads over ``[..., L, dim]`` inputs."""

    def __init__(self, rng: np.random.Generator, dim: int, heads: int = 1):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(rng, dim, dim)
        self.k = Linear(rng, dim, dim)
        self.v = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, dim)

    def _split(self, x: Tensor) -> Tensor:
        from . import ops
        *lead, L, D = x.shape
        h = self.heads
        x = ops.reshape(x, (*lead, L, h, D // h))
        n = len(lead)
        return ops.permute(x, tuple(range(n)) + (n + 1, n, n + 2))

    def __call__(self, x: Tensor, bias=None) -> tuple[Tensor, Tensor]:
        from . import ops
        *lead, L, D = x.shape
        ctx, weights = attention(self._split(self.q(x)), self._split(self.k(x)),
                                 self._split(self.v(x)), bias)
        n = len(lead)
        ctx = ops.reshape(ops.permute(ctx, tuple(range(n)) + (n + 1, n, n + 2)), (*lead, L, D))
        return self.out(ctx), weights
