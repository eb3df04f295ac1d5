"""Binary checkpoints.

Layout (little endian): magic ``MCAM``, uint32 version, uint32 length of a
UTF-8 JSON header (config, vocabulary, epoch, optimizer state), the header,
uint32 tensor count, then per tensor: uint16 name length, name, uint8 rank,
uint32 per dimension, and float64 values in C order.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..model import Captioner
from ..numerics.nn import Module
from ..numerics.optim import OptState
from ..vlt.vocab import SPECIALS, Vocab
from .config import Config

MAGIC = b"MCAM"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: Config
    vocab: Vocab
    model: Captioner
    epoch: int
    opt: OptState


def save_checkpoint(path, model: Module, config: Config, vocab: Vocab, epoch: int,
                    opt: OptState) -> None:
    header = json.dumps({
        "config": config.to_dict(), "vocab": vocab.itos[len(SPECIALS):], "epoch": int(epoch),
        "optimizer": {"learning_rate": opt.learning_rate, "step_count": opt.step_count},
    }).encode()
    params = model.parameters()
    chunks = [MAGIC, struct.pack("<II", VERSION, len(header)), header,
              struct.pack("<I", len(params))]
    for name, p in params.items():
        raw = name.encode()
        arr = np.ascontiguousarray(p.data, dtype="<f8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
                      + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes(), path)
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version, hlen = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version} is not supported "
                              f"(reader handles version {VERSION})")
    header = json.loads(r.take(hlen).decode())
    config = Config.from_dict(header["config"])
    vocab = Vocab(header["vocab"])
    model = Captioner(np.random.default_rng(0), len(vocab), config.model_dims())
    params = model.parameters()
    (count,) = r.unpack("<I")
    seen = set()
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        arr = np.frombuffer(r.take(8 * int(np.prod(shape, dtype=np.int64))), dtype="<f8")
        if name not in params or params[name].shape != tuple(shape):
            raise CheckpointError(f"{path}: tensor {name} {tuple(shape)} does not fit the model")
        params[name].data = arr.reshape(shape).astype(np.float64)
        seen.add(name)
    if seen != set(params):
        raise CheckpointError(f"{path}: missing tensors {sorted(set(params) - seen)}")
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    opt = OptState(header["optimizer"]["learning_rate"], header["optimizer"]["step_count"])
    return Checkpoint(config, vocab, model, header["epoch"], opt)
