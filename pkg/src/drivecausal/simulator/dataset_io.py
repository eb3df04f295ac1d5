"""Episode storage: a JSONL index plus a ``CDRV`` binary sidecar holding the frames.

Sidecar layout (little endian): 4-byte magic ``CDRV``, then uint32 version,
episode count, F, H, W; then ``count * F * H * W * 3`` float32 values in
episode order.  Line ``i`` of the index carries ``"clip_index": i``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .episodes import Episode, from_record, to_record

MAGIC = b"CDRV"
VERSION = 1
_HEADER = struct.Struct("<4s5I")
HEADER_BYTES = _HEADER.size


class DatasetFormatError(ValueError):
    pass


def paths(prefix) -> tuple[Path, Path]:
    prefix = Path(prefix)
    return prefix.with_name(prefix.name + ".jsonl"), prefix.with_name(prefix.name + ".cdrv")


def write_episodes(episodes: Sequence[Episode], prefix) -> tuple[Path, Path]:
    index_path, sidecar_path = paths(prefix)
    if not episodes:
        raise DatasetFormatError("refusing to write an empty dataset")
    dims = episodes[0].clip.shape[:3] if episodes[0].clip is not None else None
    for ep in episodes:
        if ep.clip is None or ep.clip.shape != (*dims, 3):
            raise DatasetFormatError(f"episode {ep.id} clip shape does not match {dims}")
    try:
        index_path.parent.mkdir(parents=True, exist_ok=True)
        with open(index_path, "w") as fh:
            for i, ep in enumerate(episodes):
                fh.write(json.dumps({**to_record(ep), "clip_index": i}) + "\n")
        with open(sidecar_path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, len(episodes), *dims))
            for ep in episodes:
                fh.write(np.ascontiguousarray(ep.clip, dtype="<f4").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write dataset at {prefix}: {exc}") from exc
    return index_path, sidecar_path


def read_header(sidecar_path) -> tuple[int, tuple[int, int, int]]:
    with open(sidecar_path, "rb") as fh:
        raw = fh.read(HEADER_BYTES)
    if len(raw) < HEADER_BYTES:
        raise DatasetFormatError(f"{sidecar_path}: truncated header")
    magic, version, count, f, h, w = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{sidecar_path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{sidecar_path}: version {version} not supported "
                                 f"(reader handles {VERSION})")
    return count, (f, h, w)


def read_episodes(prefix) -> list[Episode]:
    index_path, sidecar_path = paths(prefix)
    count, dims = read_header(sidecar_path)
    per_clip = int(np.prod(dims)) * 3
    expected = HEADER_BYTES + count * per_clip * 4
    size = sidecar_path.stat().st_size
    if size != expected:
        raise DatasetFormatError(f"{sidecar_path}: {size} bytes, expected {expected} "
                                 f"for {count} clips of {dims}")
    data = np.fromfile(sidecar_path, dtype="<f4", offset=HEADER_BYTES)
    clips = data.reshape(count, *dims, 3).astype(np.float32)
    out = []
    with open(index_path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                k = int(rec["clip_index"])
            except (ValueError, KeyError) as exc:
                raise DatasetFormatError(f"{index_path}:{lineno}: {exc}") from exc
            if not 0 <= k < count:
                raise DatasetFormatError(f"{index_path}:{lineno}: clip_index {k} out of range")
            out.append(from_record(rec, clips[k].copy()))
    if len(out) != count:
        raise DatasetFormatError(f"{index_path}: {len(out)} records for {count} clips")
    return out


def dataset_io(episodes, path, mode: str):
    """``mode="write"`` stores ``episodes`` under prefix ``path``; ``"read"`` loads them."""
    if mode == "write":
        write_episodes(episodes, path)
        return None
    if mode == "read":
        return read_episodes(path)
    raise ValueError(f"mode must be 'write' or 'read', got {mode!r}")
