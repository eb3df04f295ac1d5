"""Prefix-conditioned caption decoder.

The sequence fed to the decoder is ``[prefix tokens ; text tokens]``.  Prefix
tokens attend to each other only; text tokens attend to every prefix token
and to earlier text.  The relationship matrix ``V`` (``M x M`` for ``M``
prefix tokens) adds a learned bias to text-to-prefix attention scores: text
position ``t`` of ``L`` uses row ``t * M // L`` of ``V``.
"""
from __future__ import annotations

import numpy as np

from ..numerics import ops
from ..numerics.nn import NEG_INF, LayerNorm, Linear, Module, MultiHeadAttention, Parameter
from ..numerics.tensor import ShapeError, Tensor, ensure_tensor, no_grad
from .vocab import BOS_ID, EOS_ID, PAD_ID, TokenSeq


class DecoderBlock(Module):
    def __init__(self, rng: np.random.Generator, dim: int, heads: int, norm_prefix: bool = True):
        self.norm_prefix = norm_prefix
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(rng, dim, 2 * dim)
        self.fc2 = Linear(rng, 2 * dim, dim)

    def __call__(self, x: Tensor, bias: Tensor, m: int = 0) -> tuple[Tensor, Tensor]:
        if self.norm_prefix or m == 0:
            h = self.norm1(x)
        else:
            # prefix rows enter attention unnormalised so their relative scale survives
            pre, txt = ops.split(x, [m, x.shape[1] - m], axis=1)
            h = ops.concat([pre, self.norm1(txt)], axis=1)
        a, weights = self.attn(h, bias)
        x = ops.add(x, a)
        x = ops.add(x, self.fc2(ops.gelu(self.fc1(self.norm2(x)))))
        return x, weights


class CaptionDecoder(Module):
    def __init__(self, rng: np.random.Generator, vocab_size: int, feat_dim: int, prefix_len: int,
                 dim: int = 64, layers: int = 2, heads: int = 4, max_len: int = 16,
                 signal_dim: int = 0, norm_prefix: bool = True):
        if max_len < 2:
            raise ValueError("max_len must allow at least BOS and EOS")
        self.vocab_size, self.prefix_len, self.max_len = vocab_size, prefix_len, max_len
        self.align1 = Linear(rng, feat_dim, dim)
        self.align2 = Linear(rng, dim, dim)
        self.tok_emb = Parameter(rng.normal(0.0, 0.1, (vocab_size, dim)))
        self.pos_text = Parameter(rng.normal(0.0, 0.1, (max_len, dim)))
        self.pos_prefix = Parameter(rng.normal(0.0, 0.1, (prefix_len, dim)))
        self.blocks = [DecoderBlock(rng, dim, heads, norm_prefix) for _ in range(layers)]
        self.norm = LayerNorm(dim)
        self.head = Linear(rng, dim, vocab_size)
        self.V = Parameter(np.zeros((prefix_len, prefix_len)))
        self.signal_head = Linear(rng, dim, signal_dim) if signal_dim else None

    # -- prefix -----------------------------------------------------------------
    def align_prefix(self, feature) -> Tensor:
        """``[B, Kc, M]`` causal feature -> ``[B, M, dim]`` prefix embeddings."""
        feature = ensure_tensor(feature)
        if feature.ndim != 3:
            raise ShapeError(f"align_prefix: expected [B, channels, M], got {feature.shape}")
        if feature.shape[2] != self.prefix_len:
            raise ShapeError(f"align_prefix: {feature.shape[2]} feature tokens, decoder context "
                             f"holds {self.prefix_len}")
        x = ops.permute(feature, (0, 2, 1))
        return self.align2(ops.gelu(self.align1(x)))

    def predict_signals(self, prefix: Tensor) -> Tensor:
        if self.signal_head is None:
            raise ValueError("decoder was built without a signal head")
        return self.signal_head(ops.mean(prefix, axis=1))

    # -- attention bias -----------------------------------------------------------
    def buckets(self) -> np.ndarray:
        n_text = self.max_len - 1
        return np.arange(n_text) * self.prefix_len // n_text

    def attention_bias(self, n_text: int) -> Tensor:
        m = self.prefix_len
        top = np.concatenate([np.zeros((m, m)), np.full((m, n_text), NEG_INF)], axis=1)
        causal = np.triu(np.full((n_text, n_text), NEG_INF), k=1)
        v_rows = ops.getitem(self.V, (self.buckets()[:n_text], slice(None)))
        bottom = ops.concat([v_rows, Tensor(causal)], axis=1)
        bias = ops.concat([Tensor(top), bottom], axis=0)
        return ops.reshape(bias, (1, 1, m + n_text, m + n_text))

    # -- decoding -------------------------------------------------------------------
    def forward_teacher_forced(self, prefix: Tensor, input_ids) -> tuple[Tensor, list[Tensor]]:
        """Logits ``[B, L, vocab]`` for next-token prediction at each input position."""
        ids = np.asarray(input_ids, dtype=np.int64)
        if ids.ndim != 2 or ids.shape[0] != prefix.shape[0]:
            raise ShapeError(f"input ids {ids.shape} do not match prefix batch {prefix.shape}")
        b, n_text = ids.shape
        if n_text > self.max_len - 1:
            raise ShapeError(f"{n_text} input tokens exceed the decoder limit {self.max_len - 1}")
        m = self.prefix_len
        pre = ops.add(prefix, ops.reshape(self.pos_prefix, (1, m, -1)))
        txt = ops.add(ops.embedding(ids, self.tok_emb),
                      ops.reshape(ops.getitem(self.pos_text, slice(0, n_text)), (1, n_text, -1)))
        x = ops.concat([pre, txt], axis=1)
        bias = self.attention_bias(n_text)
        weights = []
        for block in self.blocks:
            x, w = block(x, bias, m)
            weights.append(w)
        x = self.norm(ops.getitem(x, (slice(None), slice(m, m + n_text))))
        return self.head(x), weights

    def prefix_attention(self, weights: list[Tensor], n_valid=None) -> np.ndarray:
        """Text-to-prefix attention ``[B, M]`` averaged over layers, heads and text
        positions (only the first ``n_valid[b]`` positions when given), renormalised."""
        m = self.prefix_len
        w = np.mean([np.asarray(t.data)[:, :, m:, :m].mean(axis=1) for t in weights], axis=0)
        if n_valid is not None:
            keep = np.arange(w.shape[1])[None, :] < np.asarray(n_valid)[:, None]
            w = (w * keep[..., None]).sum(axis=1) / np.maximum(keep.sum(axis=1), 1)[:, None]
        else:
            w = w.mean(axis=1)
        return w / w.sum(axis=-1, keepdims=True)

    def generate(self, prefix: Tensor, mode: str = "greedy", beam: int = 1) -> TokenSeq:
        """Decode from BOS until EOS or ``max_len`` tokens; returns padded sequences."""
        if mode == "beam" and beam < 1:
            raise ValueError(f"beam width must be >= 1, got {beam}")
        if mode not in ("greedy", "beam"):
            raise ValueError(f"mode must be 'greedy' or 'beam', got {mode!r}")
        with no_grad():
            if mode == "greedy":
                rows = self._greedy(prefix)
            else:
                rows = [self._beam(ops.getitem(prefix, slice(i, i + 1)), beam)
                        for i in range(prefix.shape[0])]
        ids = np.full((len(rows), self.max_len), PAD_ID, dtype=np.int64)
        mask = np.zeros((len(rows), self.max_len))
        for i, r in enumerate(rows):
            ids[i, :len(r)] = r
            mask[i, :len(r)] = 1.0
        return TokenSeq(ids, mask)

    def _greedy(self, prefix: Tensor) -> list[list[int]]:
        b = prefix.shape[0]
        seqs = np.full((b, 1), BOS_ID, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        while seqs.shape[1] < self.max_len and not done.all():
            logits, _ = self.forward_teacher_forced(prefix, seqs)
            nxt = np.argmax(logits.data[:, -1], axis=-1)
            nxt = np.where(done, PAD_ID, nxt)
            seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
            done |= nxt == EOS_ID
        return [_trim(r) for r in seqs.tolist()]

    def _beam(self, prefix: Tensor, k: int) -> list[int]:
        hyps = [((BOS_ID,), 0.0, False)]          # (tokens, summed log-prob, finished)
        while not all(f for _, _, f in hyps):
            live = [h for h in hyps if not h[2]]
            if len(live[0][0]) >= self.max_len:
                break
            ids = np.array([h[0] for h in live], dtype=np.int64)
            rep = ops.concat([prefix] * len(live), axis=0)
            logits, _ = self.forward_teacher_forced(rep, ids)
            logp = ops.log_softmax(logits, axis=-1).data[:, -1]
            cands = [h for h in hyps if h[2]]
            for h, row in zip(live, logp):
                for tok in range(self.vocab_size):
                    cands.append((h[0] + (tok,), h[1] + float(row[tok]), tok == EOS_ID))
            cands.sort(key=lambda c: (-c[1], c[0]))
            hyps = cands[:k]
        best = min(hyps, key=lambda c: (-c[1], c[0]))
        return list(best[0])


def _trim(row: list[int]) -> list[int]:
    return row[:row.index(EOS_ID) + 1] if EOS_ID in row else row
