"""End-to-end captioner: feature extractor -> causal analysis (optional) -> caption decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cam import CausalAnalysis
from .mfe import MultiLevelExtractor, MultiLevelFusion, check_clip, extract_bundle
from .numerics.nn import Module
from .numerics.tensor import Tensor
from .vlt.decoder import CaptionDecoder


@dataclass(frozen=True)
class ModelDims:
    frames: int = 8
    height: int = 64
    width: int = 64
    channels: int = 4
    dim: int = 64
    layers: int = 2
    heads: int = 4
    attn_blocks: int = 2
    max_len: int = 16
    use_cam: bool = True
    alpha_axis: str = "spatial"
    norm_prefix: bool = False

    @property
    def k(self) -> int:
        return self.frames * self.channels // 2

    @property
    def windows(self) -> int:
        return self.height * self.width // 1024


@dataclass
class ForwardOutput:
    logits: Tensor
    signals: Tensor
    alpha: Tensor | None
    attention: list


class Captioner(Module):
    def __init__(self, rng: np.random.Generator, vocab_size: int, dims: ModelDims):
        check_clip((1, dims.frames, dims.height, dims.width, 3))
        self.dims = dims
        self.mfe = MultiLevelExtractor(rng, dims.channels, dims.attn_blocks)
        if dims.use_cam:
            self.cam = CausalAnalysis(rng, dims.k, dims.alpha_axis)
            feat = 8 * dims.k
        else:
            self.fusion = MultiLevelFusion(rng, dims.k)
            feat = dims.k
        self.decoder = CaptionDecoder(rng, vocab_size, feat, dims.windows, dims.dim, dims.layers,
                                      dims.heads, dims.max_len, signal_dim=2 * dims.frames,
                                      norm_prefix=dims.norm_prefix)

    def encode(self, clips) -> tuple[Tensor, Tensor | None]:
        """Prefix embeddings ``[B, S, dim]`` and, with causal analysis, its weights ``alpha``."""
        clips = np.asarray(clips, dtype=np.float64)
        if self.dims.use_cam:
            out = self.cam(extract_bundle(self.mfe, clips))
            return self.decoder.align_prefix(out.feature), out.alpha
        g, l = self.mfe(clips)
        return self.decoder.align_prefix(self.fusion(g, l)), None

    def __call__(self, clips, input_ids) -> ForwardOutput:
        prefix, alpha = self.encode(clips)
        logits, attn = self.decoder.forward_teacher_forced(prefix, input_ids)
        return ForwardOutput(logits, self.decoder.predict_signals(prefix), alpha, attn)

    def relationship(self) -> Tensor:
        return self.decoder.V


def signal_targets(episodes) -> np.ndarray:
    """Per-frame speed (/16 m/s) and course (/30 deg), concatenated: ``[B, 2F]``."""
    return np.stack([np.concatenate([np.asarray(ep.signals["speed"]) / 16.0,
                                     np.asarray(ep.signals["course"]) / 30.0])
                     for ep in episodes])


__all__ = ["Captioner", "ForwardOutput", "ModelDims", "signal_targets"]
