"""Corpus-level caption metrics over whitespace tokens.

A corpus is a sequence of ``(hypothesis, references)`` pairs where the
hypothesis is a token list and references a non-empty list of token lists.

* ``bleu``: modified n-gram precisions pooled over the corpus, geometric mean
  with uniform weights, times the brevity penalty (closest reference length,
  shorter on ties).  An order with zero matches uses ``(0 + 1) / (total + 1)``
  (add-one smoothing).
* ``rouge_l``: LCS F-measure with beta = 1.2, best reference per sentence,
  averaged over the corpus.
* ``cider``: tf-idf n-gram vectors (idf from reference document frequency),
  cosine to each reference averaged, mean over n = 1..4, times 10.
* ``meteor_lite``: exact-match unigram alignment, ``F = 10PR / (R + 9P)``,
  penalty ``0.5 * (chunks / matches) ** 3``; best reference per sentence.
"""
from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np

from .. import kernels

BLEU_SMOOTHING = "add-one on zero n-gram matches"
ROUGE_BETA = 1.2
CIDER_SCALE = 10.0


class MetricError(ValueError):
    pass


def _check(corpus) -> list:
    corpus = list(corpus)
    if not corpus:
        raise MetricError("corpus is empty")
    for i, (_, refs) in enumerate(corpus):
        if not refs:
            raise MetricError(f"corpus entry {i} has no reference")
    return corpus


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(hyp_len: int, refs) -> int:
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def bleu(corpus, n: int = 4) -> float:
    corpus = _check(corpus)
    if n < 1:
        raise MetricError(f"BLEU order must be >= 1, got {n}")
    matches, totals = [0] * n, [0] * n
    hyp_len = ref_len = 0
    for hyp, refs in corpus:
        hyp_len += len(hyp)
        ref_len += _closest_ref_len(len(hyp), refs)
        for k in range(1, n + 1):
            h = ngrams(hyp, k)
            best = Counter()
            for r in refs:
                best |= ngrams(r, k)
            matches[k - 1] += sum(min(c, best[g]) for g, c in h.items())
            totals[k - 1] += sum(h.values())
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        p = (m + 1) / (t + 1) if m == 0 else m / t
        log_p += math.log(p) / n
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def modified_precision(hyp, refs, n: int) -> tuple[int, int]:
    h = ngrams(hyp, n)
    best = Counter()
    for r in refs:
        best |= ngrams(r, n)
    return sum(min(c, best[g]) for g, c in h.items()), sum(h.values())


def _lcs(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    vocab: dict[str, int] = {}
    ia = np.array([vocab.setdefault(w, len(vocab)) for w in a], dtype=np.int64)
    ib = np.array([vocab.setdefault(w, len(vocab)) for w in b], dtype=np.int64)
    return int(kernels.lcs_length(ia, ib))


def rouge_l_sentence(hyp, refs, beta: float = ROUGE_BETA) -> float:
    best = 0.0
    for r in refs:
        lcs = _lcs(hyp, r)
        if lcs == 0:
            continue
        p, rec = lcs / len(hyp), lcs / len(r)
        best = max(best, (1 + beta ** 2) * p * rec / (rec + beta ** 2 * p))
    return best


def rouge_l(corpus, beta: float = ROUGE_BETA) -> float:
    corpus = _check(corpus)
    return float(np.mean([rouge_l_sentence(h, refs, beta) for h, refs in corpus]))


def cider(corpus, max_n: int = 4) -> float:
    corpus = _check(corpus)
    if len(corpus) < 2:
        raise MetricError("CIDEr needs at least two documents for document frequencies")
    n_docs = len(corpus)
    scores = np.zeros(n_docs)
    for n in range(1, max_n + 1):
        df = Counter()
        for _, refs in corpus:
            df.update(set().union(*(ngrams(r, n).keys() for r in refs)))

        def vec(tokens):
            counts = ngrams(tokens, n)
            total = sum(counts.values())
            return {g: (c / total) * math.log(n_docs / max(1.0, df[g])) for g, c in counts.items()}

        for i, (hyp, refs) in enumerate(corpus):
            vh = vec(hyp)
            nh = math.sqrt(sum(v * v for v in vh.values()))
            sims = []
            for r in refs:
                vr = vec(r)
                nr = math.sqrt(sum(v * v for v in vr.values()))
                dot = sum(v * vr.get(g, 0.0) for g, v in vh.items())
                sims.append(dot / (nh * nr) if nh > 0 and nr > 0 else 0.0)
            scores[i] += np.mean(sims) / max_n
    return float(CIDER_SCALE * scores.mean())


def align_exact(hyp: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Greedy exact-match alignment: left to right over the hypothesis, each word takes the
    unused reference position that continues the current chunk if possible, else the earliest."""
    used = set()
    pairs: list[tuple[int, int]] = []
    for i, w in enumerate(hyp):
        options = [j for j, r in enumerate(ref) if r == w and j not in used]
        if not options:
            continue
        follow = pairs[-1][1] + 1 if pairs and pairs[-1][0] == i - 1 else None
        j = follow if follow in options else options[0]
        used.add(j)
        pairs.append((i, j))
    return pairs


def count_chunks(pairs: list[tuple[int, int]]) -> int:
    chunks = 0
    for k, (i, j) in enumerate(pairs):
        if k == 0 or not (i == pairs[k - 1][0] + 1 and j == pairs[k - 1][1] + 1):
            chunks += 1
    return chunks


def meteor_lite_sentence(hyp, refs) -> float:
    best = 0.0
    for r in refs:
        pairs = align_exact(hyp, r)
        m = len(pairs)
        if m == 0:
            continue
        p, rec = m / len(hyp), m / len(r)
        f = 10 * p * rec / (rec + 9 * p)
        penalty = 0.5 * (count_chunks(pairs) / m) ** 3
        best = max(best, f * (1 - penalty))
    return best


def meteor_lite(corpus) -> float:
    corpus = _check(corpus)
    return float(np.mean([meteor_lite_sentence(h, refs) for h, refs in corpus]))


def report(corpus) -> dict[str, float]:
    """All metrics for one corpus: bleu1..bleu4, rouge_l, cider, meteor_lite."""
    corpus = _check(corpus)
    out = {f"bleu{n}": bleu(corpus, n) for n in range(1, 5)}
    out["rouge_l"] = rouge_l(corpus)
    out["cider"] = cider(corpus) if len(corpus) >= 2 else 0.0
    out["meteor_lite"] = meteor_lite(corpus)
    return out


def to_corpus(hypotheses: Sequence[str], references: Sequence[Sequence[str] | str]) -> list:
    """Whitespace-tokenise parallel lists of strings (each reference a string or list)."""
    if len(hypotheses) != len(references):
        raise MetricError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    corpus = []
    for h, refs in zip(hypotheses, references):
        refs = [refs] if isinstance(refs, str) else list(refs)
        corpus.append((h.split(), [r.split() for r in refs]))
    return corpus
