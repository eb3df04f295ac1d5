"""Multi-level feature extraction: a global attention branch and a local convolution branch.

Shapes for a clip ``[B, F, H, W, 3]`` with channel constant ``C`` and
``S = H * W / 1024`` spatial windows:

* global: 2x32x32 patch embedding to ``[B, F/2, H/32, W/32, 8C]``, two
  residual self-attention blocks where each window attends over its own
  time steps, a per-token projection 8C -> C, then a frame-major flatten to
  ``[B, F*C/2, S]`` (channel index = time step * C + channel).
* local: four stride-2 spatial stages (3 -> 2C -> 4C -> 8C -> 16C) giving
  ``[B, F, H/16, W/16, 16C]``; a 1x1 convolution to C channels, one more
  stride-2 spatial stage and mean pooling over frame pairs align it to the
  global layout ``[B, F*C/2, S]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import ops
from ..numerics.nn import LayerNorm, Linear, Module, MultiHeadAttention, Parameter, glorot
from ..numerics.tensor import ShapeError, Tensor, ensure_tensor

PATCH = (2, 32, 32)
LOCAL_STAGES = 4


def check_clip(shape) -> None:
    if len(shape) != 5 or shape[-1] != 3:
        raise ShapeError(f"clip must be [B, F, H, W, 3], got {tuple(shape)}")
    _, f, h, w, _ = shape
    if f < 2 or f % 2 or h % 32 or w % 32 or h == 0 or w == 0:
        raise ShapeError(f"clip needs even F and H, W multiples of 32, got F={f}, H={h}, W={w}")


def global_shape(b: int, f: int, h: int, w: int, c: int) -> tuple[int, int, int]:
    return (b, f * c // 2, h * w // 1024)


def local_shape(b: int, f: int, h: int, w: int, c: int) -> tuple[int, ...]:
    return (b, f, h // 16, w // 16, 16 * c)


def frame_major(x: Tensor) -> Tensor:
    """``[B, T, Hg, Wg, C]`` -> ``[B, T*C, Hg*Wg]`` with channel index ``t*C + c``."""
    b, t, hg, wg, c = x.shape
    x = ops.reshape(x, (b, t, hg * wg, c))
    x = ops.permute(x, (0, 1, 3, 2))
    return ops.reshape(x, (b, t * c, hg * wg))


class TemporalAttentionBlock(Module):
    """Pre-norm residual attention where each spatial window attends over time."""

    def __init__(self, rng: np.random.Generator, dim: int, heads: int = 1):
        self.norm = LayerNorm(dim)
        self.attn = MultiHeadAttention(rng, dim, heads)

    def __call__(self, x: Tensor) -> Tensor:
        # x: [B, T, S, D] -> attend along T for each window
        y = ops.permute(x, (0, 2, 1, 3))
        out, _ = self.attn(self.norm(y))
        return ops.add(x, ops.permute(out, (0, 2, 1, 3)))


class Conv3d(Module):
    def __init__(self, rng: np.random.Generator, kernel, c_in: int, c_out: int, stride):
        fan_in = int(np.prod(kernel)) * c_in
        self.weight = Parameter(glorot(rng, (*kernel, c_in, c_out), fan_in=fan_in, fan_out=c_out))
        self.bias = Parameter(np.zeros(c_out))
        self.stride = tuple(stride)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, stride=self.stride)


class MultiLevelExtractor(Module):
    def __init__(self, rng: np.random.Generator, channels: int = 4, attn_blocks: int = 2,
                 heads: int = 1):
        c = self.channels = int(channels)
        if c < 1:
            raise ValueError(f"channels must be >= 1, got {c}")
        self.patch = Conv3d(rng, PATCH, 3, 8 * c, PATCH)
        self.blocks = [TemporalAttentionBlock(rng, 8 * c, heads) for _ in range(attn_blocks)]
        self.reduce = Linear(rng, 8 * c, c)
        widths = [3] + [2 ** (i + 1) * c for i in range(LOCAL_STAGES)]
        self.stages = [Conv3d(rng, (1, 2, 2), widths[i], widths[i + 1], (1, 2, 2))
                       for i in range(LOCAL_STAGES)]
        self.adjust = Linear(rng, 16 * c, c)
        self.align = Conv3d(rng, (1, 2, 2), c, c, (1, 2, 2))

    # -- global branch --------------------------------------------------------
    def embed(self, clip) -> Tensor:
        clip = ensure_tensor(clip)
        check_clip(clip.shape)
        return self.patch(clip)

    def extract_global(self, clip) -> Tensor:
        x = self.embed(clip)                               # [B, F/2, H/32, W/32, 8C]
        b, t, hg, wg, d = x.shape
        x = ops.reshape(x, (b, t, hg * wg, d))
        for block in self.blocks:
            x = block(x)
        x = self.reduce(x)                                 # [B, F/2, S, C]
        return frame_major(ops.reshape(x, (b, t, hg, wg, self.channels)))

    # -- local branch ---------------------------------------------------------
    def extract_local(self, clip) -> Tensor:
        x = ensure_tensor(clip)
        check_clip(x.shape)
        for stage in self.stages:
            x = ops.gelu(stage(x))
        return x                                           # [B, F, H/16, W/16, 16C]

    def align_local(self, local: Tensor) -> Tensor:
        b, f, h16, w16, _ = local.shape
        x = self.align(self.adjust(local))                 # [B, F, H/32, W/32, C]
        x = ops.reshape(x, (b, f // 2, 2, h16 // 2, w16 // 2, self.channels))
        x = ops.mean(x, axis=2)                            # pool frame pairs
        return frame_major(x)

    def __call__(self, clip) -> tuple[Tensor, Tensor]:
        """(global, aligned local), both ``[B, F*C/2, S]``."""
        return self.extract_global(clip), self.align_local(self.extract_local(clip))


class MultiLevelFusion(Module):
    """Per-position linear map on the concatenated (global, local) channel axis."""

    def __init__(self, rng: np.random.Generator, k: int):
        self.weight = Parameter(glorot(rng, (2 * k, k)))
        self.bias = Parameter(np.zeros(k))

    def __call__(self, g: Tensor, l: Tensor) -> Tensor:
        return fuse_multilevel(g, l, self.weight, self.bias)


def channel_linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Apply ``w`` to the channel axis of ``[B, K, S]``."""
    y = ops.linear(ops.permute(x, (0, 2, 1)), w, b)
    return ops.permute(y, (0, 2, 1))


def fuse_multilevel(g: Tensor, l: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    if g.shape != l.shape or g.ndim != 3:
        raise ShapeError(f"fuse_multilevel: global {g.shape} and local {l.shape} must match "
                         "as [B, K, S]")
    return channel_linear(ops.concat([g, l], axis=1), w, b)


# -- temporal segments -----------------------------------------------------------

SEGMENTS = ("init", "end", "whole")


def segment_clips(clip: np.ndarray) -> dict[str, np.ndarray]:
    """Sub-clips tiled back to the full length so every segment shares one feature grid:
    ``init`` repeats the first two frames, ``end`` repeats the last frame."""
    clip = np.asarray(clip)
    check_clip(clip.shape)
    f = clip.shape[1]
    init = np.tile(clip[:, :2], (1, f // 2, 1, 1, 1))
    end = np.repeat(clip[:, -1:], f, axis=1)
    return {"init": init, "end": end, "whole": clip}


@dataclass
class FeatureBundle:
    init_global: Tensor
    init_local: Tensor
    end_global: Tensor
    end_local: Tensor
    whole_global: Tensor
    whole_local: Tensor

    def __post_init__(self):
        shapes = {t.shape for t in self.tensors()}
        if len(shapes) != 1:
            raise ShapeError(f"feature bundle tensors disagree in shape: {sorted(shapes)}")

    def tensors(self) -> list[Tensor]:
        return [self.init_global, self.init_local, self.end_global, self.end_local,
                self.whole_global, self.whole_local]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.whole_global.shape


def extract_bundle(mfe: MultiLevelExtractor, clip) -> FeatureBundle:
    """Run both branches once on the three segments stacked along the batch axis."""
    clip = np.asarray(clip.data if isinstance(clip, Tensor) else clip, dtype=np.float64)
    seg = segment_clips(clip)
    b = clip.shape[0]
    stacked = np.concatenate([seg[s] for s in SEGMENTS], axis=0)
    g, l = mfe(stacked)
    parts = []
    for i in range(len(SEGMENTS)):
        sl = (slice(i * b, (i + 1) * b),)
        parts += [ops.getitem(g, sl), ops.getitem(l, sl)]
    return FeatureBundle(*parts)
