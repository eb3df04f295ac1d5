"""Text-only ingestion of driving-clip annotations in JSONL form.

Each line is an object with ``video_id`` (string), ``start_s`` and ``end_s``
(seconds, ``end_s >= start_s``), ``action`` (what the car does),
``justification`` (why) and per-second ``speed`` and ``course`` arrays.

Length policy: the signal arrays are expected to hold one sample per started
second, ``ceil(end_s - start_s)`` or one more.  Other lengths emit a
``UserWarning`` and the record is kept as is.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import jsonschema

SCHEMA = {
    "type": "object",
    "required": ["video_id", "start_s", "end_s", "action", "justification", "speed", "course"],
    "properties": {
        "video_id": {"type": "string", "minLength": 1},
        "start_s": {"type": "number", "minimum": 0},
        "end_s": {"type": "number", "minimum": 0},
        "action": {"type": "string", "minLength": 1},
        "justification": {"type": "string", "minLength": 1},
        "speed": {"type": "array", "items": {"type": "number"}},
        "course": {"type": "array", "items": {"type": "number"}},
    },
}


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class Annotation:
    video_id: str
    start_s: float
    end_s: float
    action: str
    justification: str
    speed: tuple[float, ...]
    course: tuple[float, ...]

    @property
    def narration(self) -> str:
        return self.action.strip().lower()

    @property
    def reasoning(self) -> str:
        text = self.justification.strip().lower()
        return text if text.startswith("because") else f"because {text}"


def ingest_annotations(path) -> list[Annotation]:
    path = Path(path)
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            try:
                jsonschema.validate(rec, SCHEMA)
            except jsonschema.ValidationError as exc:
                where = ".".join(str(p) for p in exc.absolute_path) or "record"
                raise AnnotationError(f"{path}:{lineno}: {where}: {exc.message}") from exc
            if rec["end_s"] < rec["start_s"]:
                raise AnnotationError(f"{path}:{lineno}: end_s < start_s")
            expect = math.ceil(rec["end_s"] - rec["start_s"])
            for key in ("speed", "course"):
                if len(rec[key]) not in (expect, expect + 1):
                    warnings.warn(f"{path}:{lineno}: {key} has {len(rec[key])} samples for a "
                                  f"{rec['end_s'] - rec['start_s']:g} s clip; record kept",
                                  UserWarning, stacklevel=2)
            out.append(Annotation(rec["video_id"], float(rec["start_s"]), float(rec["end_s"]),
                                  rec["action"], rec["justification"],
                                  tuple(map(float, rec["speed"])),
                                  tuple(map(float, rec["course"]))))
    return out
