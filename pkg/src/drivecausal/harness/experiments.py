"""Planted-cue experiment: does the gated model look at the true cause rather than the cue?

One seed simulates a dataset with a cue that co-occurs with the target action,
trains the full model and a baseline without the causal-analysis module on the
same split, and scores each by the share of test episodes whose true-cause
region receives more attention than the cue region.  The full model is read
through its gate weights alpha; the baseline, which has no gate, through its
text-to-prefix decoder attention.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .attribution import attribute, cause_over_spurious
from .config import Config
from .simulate import simulate
from .train import build_vocab, train

RHO = 0.9


@dataclass
class SpuriousResult:
    seed: int
    full: float          # cause-over-cue rate from alpha
    baseline: float      # cause-over-cue rate from decoder attention, no gate
    phi: float           # realised cue/action correlation over the whole dataset

    @property
    def margin(self) -> float:
        return self.full - self.baseline

    def passed(self, threshold: float = 0.8, margin: float = 0.15) -> bool:
        return self.full >= threshold and self.margin >= margin


def spurious_config(seed: int, base: Config | None = None, epochs: int = 13) -> Config:
    """Four-factor world: a stop follows either a red light or a crossing pedestrian, so the
    reasoning text cannot be read off the action and the true cause must be looked at."""
    base = base or Config()
    cfg = replace(base, epochs=epochs, lr_decay_epoch=max(1, int(epochs * 0.7)),
                  scenario=replace(base.scenario, spurious_rho=RHO, num_factors=4))
    return cfg.with_seed(seed)


def run_spurious_experiment(cfg: Config) -> SpuriousResult:
    from ..simulator import cooccurrence

    data = simulate(cfg)
    vocab = build_vocab(data["train"])
    test = data["test"]
    full = train(replace(cfg, use_cam=True), data["train"], data["val"], vocab=vocab)
    base = train(replace(cfg, use_cam=False), data["train"], data["val"], vocab=vocab)
    every = data["train"] + data["val"] + test
    phi = cooccurrence(every, cfg.scenario.spurious_factor, cfg.scenario.spurious_action)["phi"]
    return SpuriousResult(
        seed=cfg.seed,
        full=cause_over_spurious(attribute(full.model, test, vocab, "alpha"), test),
        baseline=cause_over_spurious(attribute(base.model, test, vocab, "decoder"), test),
        phi=phi,
    )
