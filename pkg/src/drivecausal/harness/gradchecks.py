"""Finite-difference checks for every differentiable operation and the full training loss.

Each case builds fresh 64-bit inputs from a seed and reduces the operation's
output to a scalar with a fixed random weighting, so every output element
contributes to the checked gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..model import Captioner, ModelDims
from ..numerics import ops
from ..numerics.gradcheck import GradCheckReport, grad_check
from ..numerics.nn import MultiHeadAttention, attention
from ..numerics.tensor import Tensor
from ..vlt import training_losses

TOLERANCE = 1e-4
STEP = 1e-5


def _t(rng, *shape, away_from_zero: bool = False) -> Tensor:
    x = rng.normal(size=shape)
    if away_from_zero:
        # keep kinked ops (abs, relu) clear of their non-differentiable point
        x = np.sign(x) * (np.abs(x) + 0.1)
    return Tensor(x, requires_grad=True)


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    return ops.sum(ops.mul(out, Tensor(w)))


def _case(build: Callable[[np.random.Generator], tuple[Callable[[], Tensor], dict]]):
    def run(rng):
        fn, params = build(rng)
        probe = fn()
        w = rng.normal(size=probe.shape) if probe.ndim else None
        loss = (lambda: _weighted(fn(), w)) if w is not None else fn
        return loss, params
    return run


def _unary(op, away=False):
    def build(rng):
        x = _t(rng, 3, 4, away_from_zero=away)
        return (lambda: op(x)), {"x": x}
    return _case(build)


def _binary(op, sa=(3, 4), sb=(3, 4)):
    def build(rng):
        a, b = _t(rng, *sa), _t(rng, *sb)
        return (lambda: op(a, b)), {"a": a, "b": b}
    return _case(build)


def _linear(rng):
    x, w, b = _t(rng, 2, 3, 5), _t(rng, 5, 4), _t(rng, 4)
    return (lambda: ops.linear(x, w, b)), {"x": x, "w": w, "b": b}


def _concat(rng):
    a, b = _t(rng, 2, 3), _t(rng, 2, 5)
    return (lambda: ops.concat([a, b], axis=1)), {"a": a, "b": b}


def _split(rng):
    x = _t(rng, 2, 7)
    def fn():
        p, q = ops.split(x, [3, 4], axis=1)
        return ops.add(ops.sum(ops.square(p)), ops.sum(ops.scale(q, 2.0)))
    return fn, {"x": x}


def _conv(stride, padding, kernel):
    def build(rng):
        x = _t(rng, 1, 4, 6, 6, 2)
        w, b = _t(rng, *kernel, 2, 3), _t(rng, 3)
        return (lambda: ops.conv3d(x, w, b, stride=stride, padding=padding)), \
            {"x": x, "w": w, "b": b}
    return _case(build)


def _layer_norm(rng):
    x, g, b = _t(rng, 2, 3, 6), _t(rng, 6), _t(rng, 6)
    return (lambda: ops.layer_norm(x, g, b)), {"x": x, "gamma": g, "beta": b}


def _embedding(rng):
    table = _t(rng, 6, 4)
    ids = rng.integers(0, 6, size=(2, 5))
    return (lambda: ops.embedding(ids, table)), {"table": table}


def _cross_entropy(rng):
    logits = _t(rng, 2, 4, 5)
    targets = rng.integers(0, 5, size=(2, 4))
    mask = (rng.random((2, 4)) < 0.7).astype(float)
    mask[0, 0] = 1.0
    return (lambda: ops.cross_entropy(logits, targets, mask)), {"logits": logits}


def _kl(rng):
    logits = _t(rng, 2, 3, 5)
    p = rng.dirichlet(np.ones(5), size=(2, 3))
    return (lambda: ops.kl_div(p, ops.softmax(logits, axis=-1))), {"logits": logits}


def _attention(rng):
    q, k, v = _t(rng, 2, 3, 4), _t(rng, 2, 5, 4), _t(rng, 2, 5, 4)
    bias = rng.normal(size=(1, 3, 5))
    return (lambda: attention(q, k, v, bias)[0]), {"q": q, "k": k, "v": v}


def _mha(rng):
    mha = MultiHeadAttention(rng, 4, heads=2)
    x = _t(rng, 2, 3, 4)
    params = {"x": x, **mha.parameters()}
    return (lambda: mha(x)[0]), params


OP_CASES: dict[str, Callable] = {
    "add": _binary(ops.add),
    "add_broadcast": _binary(ops.add, (3, 4), (1, 4)),
    "mul": _binary(ops.mul),
    "mul_broadcast": _binary(ops.mul, (3, 4), (3, 1)),
    "neg": _unary(ops.neg),
    "scale": _unary(lambda x: ops.scale(x, -1.7)),
    "abs": _unary(ops.abs, away=True),
    "square": _unary(ops.square),
    "relu": _unary(ops.relu, away=True),
    "gelu": _unary(ops.gelu),
    "matmul": _binary(ops.matmul, (2, 3, 4), (2, 4, 5)),
    "matmul_2d": _binary(ops.matmul, (3, 4), (4, 2)),
    "bias_add": _binary(ops.bias_add, (2, 3, 4), (4,)),
    "linear": _case(_linear),
    "concat": _case(_concat),
    "getitem": _unary(lambda x: ops.getitem(x, (slice(None), np.array([0, 2, 2])))),
    "split": _split,
    "reshape": _unary(lambda x: ops.reshape(x, (2, 6))),
    "permute": _unary(lambda x: ops.permute(x, (1, 0))),
    "sum": _unary(lambda x: ops.sum(x, axis=1)),
    "mean": _unary(lambda x: ops.mean(x, axis=0, keepdims=True)),
    "conv3d_patch": _conv((1, 2, 2), 0, (1, 2, 2)),
    "conv3d_strided": _conv((1, 2, 2), (0, 1, 1), (1, 3, 3)),
    "conv3d_temporal": _conv(1, 1, (3, 3, 3)),
    "conv1x1": _binary(ops.conv1x1, (2, 3, 4), (4, 5)),
    "layer_norm": _case(_layer_norm),
    "embedding": _case(_embedding),
    "softmax": _unary(lambda x: ops.softmax(x, axis=0)),
    "log_softmax": _unary(lambda x: ops.log_softmax(x, axis=-1)),
    "cross_entropy": _cross_entropy,
    "kl_div": _kl,
    "attention": _case(_attention),
    "multi_head_attention": _case(_mha),
}

# smallest shapes that still exercise every stage: 2 frames, one 32x32 window
TINY_DIMS = ModelDims(frames=2, height=32, width=32, channels=2, dim=8, layers=1, heads=2,
                      attn_blocks=1, max_len=5)


def composed_case(rng: np.random.Generator, dims: ModelDims = TINY_DIMS, vocab_size: int = 7,
                  batch: int = 2):
    """Full clip -> features -> causal analysis -> decoder -> total training loss."""
    model = Captioner(rng, vocab_size, dims)
    # Zero-initialised tensors (biases, the gate, V) put the check on a kink: a ReLU unit
    # whose receptive field is dead has pre-activation exactly 0, and |V| is not
    # differentiable at 0.  Move them to a generic point.
    for p in model.parameters().values():
        if not np.any(p.data):
            p.data[...] = rng.normal(0.0, 0.5 if p is model.decoder.V else 0.05, p.shape)
    clips = rng.random((batch, dims.frames, dims.height, dims.width, 3))
    ids = rng.integers(4, vocab_size, size=(batch, dims.max_len))
    mask = np.ones(ids.shape)
    mask[0, -1] = 0.0
    signals = rng.normal(size=(batch, 2 * dims.frames))

    def fn():
        out = model(clips, ids[:, :-1])
        rep = training_losses(out.logits, ids[:, 1:], mask[:, 1:], out.signals, signals,
                              V=model.relationship(), include_sparse=True)
        return rep.objective

    return fn, model.parameters()


@dataclass
class CheckResult:
    name: str
    seed: int
    report: GradCheckReport

    @property
    def passed(self) -> bool:
        return self.report.passed


def check_op(name: str, seed: int, tolerance: float = TOLERANCE) -> CheckResult:
    rng = np.random.default_rng([seed, 11])
    fn, params = OP_CASES[name](rng)
    return CheckResult(name, seed, grad_check(fn, params, tolerance=tolerance, h=STEP))


def check_composed(seed: int, tolerance: float = TOLERANCE, max_coords: int | None = 6,
                   dims: ModelDims = TINY_DIMS) -> CheckResult:
    rng = np.random.default_rng([seed, 12])
    fn, params = composed_case(rng, dims)
    report = grad_check(fn, params, tolerance=tolerance, h=STEP, max_coords=max_coords,
                        rng=np.random.default_rng([seed, 13]))
    return CheckResult("composed_loss", seed, report)


def run_gradchecks(seeds, ops_only: bool = False, max_coords: int | None = 6) -> list[CheckResult]:
    results = []
    for seed in seeds:
        results.extend(check_op(name, seed) for name in OP_CASES)
        if not ops_only:
            results.append(check_composed(seed, max_coords=max_coords))
    return results
