"""Caption generation and scoring, with separate narration and reasoning tables."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np

from ..metrics import BLEU_SMOOTHING, report, to_corpus
from ..model import Captioner
from ..numerics.tensor import no_grad
from ..simulator import Episode, split_caption
from ..vlt import Vocab, detokenize
from .config import Config

METRIC_KEYS = ("bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider", "meteor_lite")
_TABLE = {"type": "object", "required": list(METRIC_KEYS), "additionalProperties": False,
          "properties": {k: {"type": "number", "minimum": 0} for k in METRIC_KEYS}}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "bleu_smoothing", "splits"],
    "properties": {
        "config": {"type": "object"},
        "bleu_smoothing": {"type": "string"},
        "splits": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["episodes", "narration", "reasoning"],
                "properties": {"episodes": {"type": "integer", "minimum": 1},
                               "narration": _TABLE, "reasoning": _TABLE},
            },
        },
    },
}


class EvaluationError(ValueError):
    pass


def generate_captions(model: Captioner, episodes: Sequence[Episode], vocab: Vocab,
                      beam: int = 1, batch_size: int = 32) -> list[dict]:
    if len(vocab) != model.decoder.vocab_size:
        raise EvaluationError(f"vocabulary has {len(vocab)} tokens, model expects "
                              f"{model.decoder.vocab_size}")
    rows = []
    for i in range(0, len(episodes), batch_size):
        chunk = episodes[i:i + batch_size]
        with no_grad():
            prefix, _ = model.encode(np.stack([ep.clip for ep in chunk]))
        mode = "greedy" if beam == 1 else "beam"
        seqs = model.decoder.generate(prefix, mode=mode, beam=beam)
        for ep, ids in zip(chunk, seqs.ids):
            narration, reasoning = split_caption(detokenize(ids, vocab))
            rows.append({"id": ep.id, "narration": narration, "reasoning": reasoning})
    return rows


def score_split(episodes: Sequence[Episode], generated: Sequence[Mapping]) -> dict:
    out = {"episodes": len(episodes)}
    for part in ("narration", "reasoning"):
        corpus = to_corpus([g[part] for g in generated], [getattr(ep, part) for ep in episodes])
        out[part] = report(corpus)
    return out


def evaluate(model: Captioner, vocab: Vocab, config: Config,
             splits: Mapping[str, Sequence[Episode]], out_dir=None) -> dict:
    rep = {"config": config.to_dict(), "bleu_smoothing": BLEU_SMOOTHING, "splits": {}}
    for name, episodes in splits.items():
        if not episodes:
            continue
        generated = generate_captions(model, episodes, vocab, config.beam)
        rep["splits"][name] = score_split(episodes, generated)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            with open(Path(out_dir) / f"generated_{name}.jsonl", "w") as fh:
                for row in generated:
                    fh.write(json.dumps(row) + "\n")
    validate_report(rep)
    if out_dir is not None:
        (Path(out_dir) / "report.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return rep


def validate_report(rep: dict) -> None:
    jsonschema.validate(rep, REPORT_SCHEMA)
