"""Where a trained model looks: attention mass per rendered factor region."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..cam import window_mass
from ..model import Captioner
from ..numerics.tensor import no_grad
from ..simulator import Episode, caption_text
from ..vlt import Vocab, tokenize_batch


class AttributionError(ValueError):
    pass


@dataclass
class EpisodeAttribution:
    episode_id: str
    source: str                       # "alpha" or "decoder"
    window_mass: np.ndarray           # [S]
    factor_mass: dict[str, float]     # every painted factor and cue

    def cause_mass(self, causes: Sequence[str]) -> float:
        return max(self.factor_mass[c] for c in causes)


def window_masses(model: Captioner, episodes: Sequence[Episode], vocab: Vocab,
                  source: str | None = None, batch_size: int = 32) -> tuple[str, np.ndarray]:
    """Per-episode attention over windows ``[N, S]``.

    ``source="alpha"`` reads the causal-analysis weights (needs the module);
    ``"decoder"`` reads text-to-prefix attention under teacher forcing on the
    reference caption.  The default picks alpha when available.
    """
    source = source or ("alpha" if model.dims.use_cam else "decoder")
    if source == "alpha" and not model.dims.use_cam:
        raise AttributionError("model has no causal-analysis weights to read")
    out = []
    with no_grad():
        for i in range(0, len(episodes), batch_size):
            chunk = episodes[i:i + batch_size]
            clips = np.stack([ep.clip for ep in chunk]).astype(np.float64)
            if source == "alpha":
                _, alpha = model.encode(clips)
                out.append(window_mass(alpha))
            else:
                toks = tokenize_batch([caption_text(ep.narration, ep.reasoning) for ep in chunk],
                                      vocab, model.dims.max_len)
                fwd = model(clips, toks.ids[:, :-1])
                n_valid = toks.mask[:, 1:].sum(axis=1).astype(int)
                out.append(model.decoder.prefix_attention(fwd.attention, n_valid))
    return source, np.concatenate(out, axis=0)


def attribute(model: Captioner, episodes: Sequence[Episode], vocab: Vocab,
              source: str | None = None) -> list[EpisodeAttribution]:
    for ep in episodes:
        if ep.clip is None or not ep.factor_domains:
            raise AttributionError(f"episode {ep.id} carries no rendered factor layout")
    source, masses = window_masses(model, episodes, vocab, source)
    result = []
    for ep, m in zip(episodes, masses):
        layout = ep.layout()
        fm = {name: float(m[layout.window_of(name)]) for name in layout.regions}
        result.append(EpisodeAttribution(ep.id, source, m, fm))
    return result


def cause_over_spurious(attrs: Sequence[EpisodeAttribution], episodes: Sequence[Episode]) -> float:
    """Fraction of episodes whose true-cause region outweighs every planted cue region."""
    wins = []
    for a, ep in zip(attrs, episodes):
        if not ep.spurious_labels:
            raise AttributionError(f"episode {ep.id} has no planted cue")
        cause = a.cause_mass(ep.causal_label)
        wins.append(all(cause > a.factor_mass[s] for s in ep.spurious_labels))
    return float(np.mean(wins))
