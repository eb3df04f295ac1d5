"""Template narration and reasoning over a closed vocabulary."""
from __future__ import annotations

from typing import Sequence

from ..dsdag.model import ACTIONS

NARRATION = {
    "maintain": "the car drives forward",
    "accelerate": "the car speeds up",
    "decelerate": "the car slows down",
    "stop": "the car stops",
    "turn_left": "the car turns left",
    "turn_right": "the car turns right",
    "lane_change": "the car changes lanes",
    "reverse": "the car backs up",
}

# (factor, value) -> clause after "because"
REASONS = {
    ("traffic_light", "green"): "the traffic light turns green",
    ("traffic_light", "yellow"): "the traffic light turns yellow",
    ("traffic_light", "red"): "the traffic light turns red",
    ("lead_distance", "far"): "the road ahead is open",
    ("lead_distance", "near"): "the car ahead is close",
    ("weather", "clear"): "the weather is clear",
    ("weather", "rain"): "the road is wet",
    ("pedestrian", "none"): "the crossing is empty",
    ("pedestrian", "crossing"): "a pedestrian is crossing",
    ("road_curve", "straight"): "the road is straight",
    ("road_curve", "sharp"): "the road curves sharply",
}
DEFAULT_REASON = "the road is clear"


def reason_clause(factor: str, value: str) -> str:
    return REASONS.get((factor, value), f"the {factor.replace('_', ' ')} is {value.replace('_', ' ')}")


def template_caption(state_trace: Sequence, causal_label: Sequence[str]) -> tuple[str, str]:
    """(narration, reasoning) for the last transition of a state trace."""
    if not state_trace:
        raise ValueError("state trace is empty")
    _, action, end = state_trace[-1]
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    narration = NARRATION[action]
    if not causal_label:
        return narration, f"because {DEFAULT_REASON}"
    env = end.env.assignments
    clauses = [reason_clause(f, env[f]) for f in causal_label]
    return narration, "because " + " and ".join(clauses)


def caption_text(narration: str, reasoning: str) -> str:
    """The single sentence the decoder is trained on."""
    return f"{narration} {reasoning}"


def split_caption(text: str) -> tuple[str, str]:
    """Inverse of :func:`caption_text`; the reasoning starts at the first 'because'."""
    words = text.split()
    if "because" in words:
        k = words.index("because")
        return " ".join(words[:k]), " ".join(words[k:])
    return " ".join(words), ""


def vocabulary() -> set[str]:
    words = {"because", "and"}
    for s in list(NARRATION.values()) + list(REASONS.values()) + [DEFAULT_REASON]:
        words.update(s.split())
    return words
