"""Whitespace word vocabulary and fixed-length token sequences."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)


class VocabError(ValueError):
    pass


class Vocab:
    def __init__(self, words: Iterable[str]):
        words = [w for w in words if w not in SPECIALS]
        if not words:
            raise VocabError("vocabulary has no words")
        if len(set(words)) != len(words):
            raise VocabError("vocabulary words must be unique")
        self.itos = list(SPECIALS) + list(words)
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @classmethod
    def build(cls, corpus: Iterable[str]) -> "Vocab":
        words = sorted({w for text in corpus for w in normalise(text).split()})
        return cls(words)

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text().splitlines()
        if tuple(lines[:4]) != SPECIALS:
            raise VocabError(f"{path}: first four tokens must be {SPECIALS}")
        return cls(lines[4:])


def normalise(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass
class TokenSeq:
    ids: np.ndarray    # [N] or [B, N] int64
    mask: np.ndarray   # same shape, 1.0 on real tokens (BOS..EOS)

    def __len__(self) -> int:
        return self.ids.shape[-1]


def tokenize(text: str, vocab: Vocab, max_len: int) -> TokenSeq:
    """``[BOS, words..., EOS, PAD...]`` of length ``max_len``; unknown words map to UNK."""
    if len(vocab) <= len(SPECIALS):
        raise VocabError("vocabulary has no words")
    words = normalise(text).split()
    if len(words) + 2 > max_len:
        raise VocabError(f"{len(words)} words do not fit max_len={max_len} with BOS/EOS")
    ids = [BOS_ID] + [vocab.stoi.get(w, UNK_ID) for w in words] + [EOS_ID]
    n = len(ids)
    out = np.full(max_len, PAD_ID, dtype=np.int64)
    out[:n] = ids
    mask = np.zeros(max_len)
    mask[:n] = 1.0
    return TokenSeq(out, mask)


def tokenize_batch(texts: Iterable[str], vocab: Vocab, max_len: int) -> TokenSeq:
    seqs = [tokenize(t, vocab, max_len) for t in texts]
    return TokenSeq(np.stack([s.ids for s in seqs]), np.stack([s.mask for s in seqs]))


def detokenize(seq, vocab: Vocab) -> str:
    """Words up to the first EOS, skipping BOS and PAD."""
    ids = seq.ids if isinstance(seq, TokenSeq) else seq
    words = []
    for i in np.asarray(ids).tolist():
        if i == EOS_ID:
            break
        if i in (BOS_ID, PAD_ID):
            continue
        words.append(vocab.itos[i])
    return " ".join(words)
