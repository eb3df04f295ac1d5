"""Training loop: mini-batch SGD with a step learning-rate decay and best-validation checkpoints."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..model import Captioner, signal_targets
from ..numerics.optim import SGD
from ..numerics.tensor import NonFiniteError, no_grad
from ..simulator import Episode, caption_text, vocabulary
from ..vlt import Vocab, tokenize_batch, training_losses
from .checkpoint import save_checkpoint
from .config import Config

log = logging.getLogger(__name__)

GATE_PARAMS = ("cam.W_H", "cam.b_H")
LOSS_COLUMNS = ("epoch", "lr", "l_total", "l_ce", "l_kl", "l_signal", "l_sparse", "val_total")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainResult:
    model: Captioner
    vocab: Vocab
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    checkpoint: Path | None = None


def build_vocab(episodes: Sequence[Episode] = ()) -> Vocab:
    """Closed simulator vocabulary plus any words seen in the given episodes."""
    words = set(vocabulary())
    for ep in episodes:
        words.update(caption_text(ep.narration, ep.reasoning).lower().split())
    return Vocab(sorted(words))


def make_model(cfg: Config, vocab: Vocab) -> Captioner:
    return Captioner(np.random.default_rng([cfg.seed, 1]), len(vocab), cfg.model_dims())


class Batch:
    def __init__(self, episodes: Sequence[Episode], vocab: Vocab, max_len: int):
        self.episodes = list(episodes)
        self.clips = np.stack([ep.clip for ep in episodes]).astype(np.float64)
        self.tokens = tokenize_batch([caption_text(ep.narration, ep.reasoning) for ep in episodes],
                                     vocab, max_len)
        self.signals = signal_targets(episodes)


def batch_losses(model: Captioner, batch: Batch, cfg: Config):
    out = model(batch.clips, batch.tokens.ids[:, :-1])
    return training_losses(out.logits, batch.tokens.ids[:, 1:], batch.tokens.mask[:, 1:],
                           out.signals, batch.signals, beta=cfg.beta, epsilon=cfg.epsilon,
                           V=model.relationship(), lam=cfg.lam,
                           include_sparse=cfg.include_sparse), out


def evaluate_loss(model: Captioner, episodes: Sequence[Episode], vocab: Vocab, cfg: Config) -> float:
    if not episodes:
        return float("nan")
    total, n = 0.0, 0
    with no_grad():
        for i in range(0, len(episodes), cfg.batch_size):
            chunk = episodes[i:i + cfg.batch_size]
            rep, _ = batch_losses(model, Batch(chunk, vocab, cfg.max_len), cfg)
            total += float(rep.objective.data) * len(chunk)
            n += len(chunk)
    return total / n


def train(cfg: Config, train_set: Sequence[Episode], val_set: Sequence[Episode] = (),
          out_dir=None, vocab: Vocab | None = None, callback=None) -> TrainResult:
    """Train from scratch; writes ``losses.csv`` and ``best.ckpt`` under ``out_dir`` if given."""
    if not train_set:
        raise ValueError("training set is empty")
    vocab = vocab or build_vocab(train_set)
    model = make_model(cfg, vocab)
    params = model.parameters()
    gate = {n: cfg.gate_lr_scale for n in GATE_PARAMS if n in params}
    opt = SGD(params, cfg.lr_at(0), cfg.clip_norm, lr_scale=gate)
    rng = np.random.default_rng([cfg.seed, 2])
    result = TrainResult(model, vocab)
    out_dir = Path(out_dir) if out_dir is not None else None
    best = math.inf
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_fh = open(out_dir / "losses.csv", "w", newline="")
        writer = csv.DictWriter(csv_fh, fieldnames=LOSS_COLUMNS)
        writer.writeheader()
    try:
        for epoch in range(cfg.epochs):
            opt.lr = cfg.lr_at(epoch)
            order = rng.permutation(len(train_set))
            sums = dict.fromkeys(LOSS_COLUMNS[2:7], 0.0)
            for step, start in enumerate(range(0, len(order), cfg.batch_size)):
                idx = tuple(order[start:start + cfg.batch_size].tolist())
                batch = Batch([train_set[i] for i in idx], vocab, cfg.max_len)
                try:
                    rep, _ = batch_losses(model, batch, cfg)
                    obj = rep.objective
                    if not np.isfinite(obj.data):
                        raise NonFiniteError("objective is not finite")
                    obj.backward()
                    for p in params.values():
                        if not np.all(np.isfinite(p.grad)):
                            raise NonFiniteError(f"gradient of {p.name} is not finite")
                except NonFiniteError as exc:
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}: "
                                           f"{exc}") from exc
                opt.step()
                for k, v in rep.values().items():
                    if k in sums:
                        sums[k] += v * len(idx)
            row = {"epoch": epoch, "lr": opt.lr,
                   **{k: v / len(train_set) for k, v in sums.items()}}
            row["val_total"] = evaluate_loss(model, val_set, vocab, cfg)
            result.history.append(row)
            log.info("epoch %d %s", epoch, row)
            score = row["val_total"] if val_set else row["l_total"]
            if score < best:
                best, result.best_epoch = score, epoch
                if out_dir is not None:
                    result.checkpoint = out_dir / "best.ckpt"
                    save_checkpoint(result.checkpoint, model, cfg, vocab, epoch, opt.state)
            if out_dir is not None:
                writer.writerow(row)
                csv_fh.flush()
            if callback is not None:
                callback(epoch, model, row)
    finally:
        if out_dir is not None:
            csv_fh.close()
    return result
