"""Side-by-side explanations: model-level key factors and where a trained network looks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..dsdag import CausalExplanation, Scm, key_factors
from ..model import Captioner
from ..simulator import Episode
from ..vlt import Vocab
from .attribution import AttributionError, attribute


@dataclass
class Explanation:
    episode_id: str
    action: str
    causal_label: tuple[str, ...]
    scm: CausalExplanation | None
    attention: list[tuple[str, float]] | None     # regions ranked by mass
    source: str | None

    def to_dict(self) -> dict:
        return {"episode": self.episode_id, "action": self.action,
                "causal_label": list(self.causal_label),
                "scm": self.scm.to_dict() if self.scm is not None else None,
                "attention": None if self.attention is None else
                [{"region": r, "mass": m} for r, m in self.attention],
                "attention_source": self.source}


def explain_scm(scm: Scm, episode: Episode) -> CausalExplanation:
    """Key factors for the episode's last (start vehicle, action) step."""
    start, action, _ = episode.state_trace[-1]
    return key_factors(scm, start.vehicle, action)


def run_explain(episodes: Sequence[Episode], scm: Scm | None = None,
                model: Captioner | None = None, vocab: Vocab | None = None,
                source: str | None = None) -> list[Explanation]:
    """Explain each episode by the model tables, the network, or both."""
    if scm is None and model is None:
        raise ValueError("run_explain needs a causal model, a trained network, or both")
    attrs = [None] * len(episodes)
    if model is not None:
        if vocab is None:
            raise ValueError("the network path needs the training vocabulary")
        for ep in episodes:
            if ep.clip is None or not ep.factor_domains:
                raise AttributionError(f"episode {ep.id} is not a simulator episode: no painted "
                                       "regions to attribute attention to")
        attrs = attribute(model, episodes, vocab, source)
    out = []
    for ep, a in zip(episodes, attrs):
        ranked = None if a is None else sorted(a.factor_mass.items(), key=lambda kv: (-kv[1], kv[0]))
        out.append(Explanation(ep.id, ep.action, tuple(ep.causal_label),
                               explain_scm(scm, ep) if scm is not None else None,
                               ranked, None if a is None else a.source))
    return out
