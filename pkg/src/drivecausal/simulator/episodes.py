"""Labeled driving episodes drawn from a model, with optional planted spurious cues."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ..dsdag.model import (ACTIONS, DANGERS, SAFE, EnvState, SafeState, Scm, VehicleState, do,
                           evolve, select_action)
from .captions import template_caption
from .render import Layout, check_dims, render_frames

SPURIOUS_DOMAIN = ("off", "on")


class SimulatorError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    num_factors: int = 3
    spurious_rho: float = 0.0
    frame_dims: tuple[int, int, int] = (8, 64, 64)
    noise_sigma: float = 0.02
    episodes: int = 500
    seed: int = 0
    spurious_factor: str = "brake_light"
    spurious_action: str = "stop"

    def __post_init__(self):
        object.__setattr__(self, "frame_dims", tuple(int(d) for d in self.frame_dims))
        if self.num_factors < 1:
            raise SimulatorError(f"num_factors must be >= 1, got {self.num_factors}")
        if not 0.0 <= self.spurious_rho < 1.0:
            raise SimulatorError(f"spurious_rho must lie in [0, 1), got {self.spurious_rho}")
        if self.noise_sigma < 0:
            raise SimulatorError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.episodes < 1:
            raise SimulatorError(f"episodes must be >= 1, got {self.episodes}")
        if self.spurious_action not in ACTIONS:
            raise SimulatorError(f"unknown spurious_action {self.spurious_action!r}")
        check_dims(self.frame_dims)


@dataclass(eq=False)
class Episode:
    id: str
    state_trace: tuple                # ((SafeState, action, SafeState), ...)
    signals: dict                     # {"speed": [m/s per frame], "course": [deg per frame]}
    narration: str
    reasoning: str
    causal_label: tuple[str, ...]
    spurious_labels: tuple[str, ...]
    clip: np.ndarray | None
    seed: int
    factor_domains: dict = field(default_factory=dict)   # ordered name -> domain
    spurious: dict = field(default_factory=dict)         # planted name -> "off" | "on"
    noise_sigma: float = 0.0

    def __post_init__(self):
        if set(self.causal_label) & set(self.spurious_labels):
            raise SimulatorError(f"factor(s) {set(self.causal_label) & set(self.spurious_labels)} "
                                 "cannot be both causal and spurious")
        if not self.narration or not self.reasoning:
            raise SimulatorError("narration and reasoning must be non-empty")

    @property
    def action(self) -> str:
        return self.state_trace[-1][1]

    @property
    def start(self) -> SafeState:
        return self.state_trace[0][0]

    @property
    def end(self) -> SafeState:
        return self.state_trace[-1][2]

    def layout(self) -> Layout:
        dims = self.clip.shape[:3] if self.clip is not None else None
        if dims is None:
            raise SimulatorError(f"episode {self.id} has no clip")
        return Layout(list(self.factor_domains), list(self.spurious), dims[1], dims[2])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Episode):
            return NotImplemented
        if (self.clip is None) != (other.clip is None):
            return False
        if self.clip is not None and not (self.clip.shape == other.clip.shape
                                          and np.array_equal(self.clip, other.clip)):
            return False
        return to_record(self) == to_record(other)


# -- record conversion (shared by the JSONL writer and equality) --------------

def _state_dict(s: SafeState) -> dict:
    return {"vehicle": vars(s.vehicle).copy(), "env": dict(s.env.assignments), "noise": s.env.noise}


def _state_from(d: Mapping) -> SafeState:
    return SafeState(VehicleState(**d["vehicle"]), EnvState(d["env"], d["noise"]))


def to_record(ep: Episode) -> dict:
    return {
        "id": ep.id,
        "narration": ep.narration,
        "reasoning": ep.reasoning,
        "causal_label": list(ep.causal_label),
        "spurious_labels": list(ep.spurious_labels),
        "spurious": dict(ep.spurious),
        "signals": {k: list(v) for k, v in ep.signals.items()},
        "seed": int(ep.seed),
        "factor_domains": {k: list(v) for k, v in ep.factor_domains.items()},
        "noise_sigma": ep.noise_sigma,
        "state_trace": [{"start": _state_dict(a), "action": y, "end": _state_dict(b)}
                        for a, y, b in ep.state_trace],
    }


def from_record(rec: Mapping, clip: np.ndarray | None = None) -> Episode:
    trace = tuple((_state_from(t["start"]), t["action"], _state_from(t["end"]))
                  for t in rec["state_trace"])
    return Episode(
        id=rec["id"], state_trace=trace,
        signals={k: [float(x) for x in v] for k, v in rec["signals"].items()},
        narration=rec["narration"], reasoning=rec["reasoning"],
        causal_label=tuple(rec["causal_label"]), spurious_labels=tuple(rec["spurious_labels"]),
        clip=clip, seed=int(rec["seed"]),
        factor_domains={k: tuple(v) for k, v in rec["factor_domains"].items()},
        spurious=dict(rec["spurious"]), noise_sigma=float(rec["noise_sigma"]),
    )


# -- generation ----------------------------------------------------------------

SPEED_MPS = {"stopped": 0.0, "slow": 4.0, "medium": 10.0, "fast": 16.0}
COURSE_DEG = {"straight": 0.0, "left": -30.0, "right": 30.0}


def ramp(n_frames: int) -> np.ndarray:
    """Blend weight of the end state per frame: 0 over the first two frames, 1 on the last."""
    if n_frames == 2:
        return np.array([0.0, 1.0])
    return np.clip((np.arange(n_frames) - 1.0) / (n_frames - 2.0), 0.0, 1.0)


def synth_signals(start: VehicleState, end: VehicleState, n_frames: int) -> dict:
    w = ramp(n_frames)
    speed = (1 - w) * SPEED_MPS[start.speed] + w * SPEED_MPS[end.speed]
    course = (1 - w) * COURSE_DEG[start.heading] + w * COURSE_DEG[end.heading]
    return {"speed": [float(x) for x in speed], "course": [float(x) for x in course]}


def eventful_changes(scm: Scm) -> list[tuple[int, int, int, int]]:
    """All (vehicle, start env, factor, new value) where the start is safe with ``maintain``
    admissible and the single-factor change makes ``maintain`` inadmissible."""
    safe = scm.fw == DANGERS.index(SAFE)
    keeps = (scm.fy & 1).astype(bool)
    ok_start = safe & keeps
    dims = scm.dims
    strides = [int(np.prod(dims[i + 1:])) for i in range(len(dims))]
    envs = np.arange(scm.n_env)
    out = []
    for f, (d, st) in enumerate(zip(dims, strides)):
        cur = (envs // st) % d
        for v in range(d):
            target = envs + (v - cur) * st
            hit = ok_start & ~keeps[:, target] & (cur != v)[None, :]
            for u, e in zip(*np.nonzero(hit)):
                out.append((int(u), int(e), f, v))
    out.sort()
    return out


def _streams(seed: int):
    state, noise, render = np.random.SeedSequence(int(seed)).spawn(3)
    return (np.random.default_rng(state), np.random.default_rng(noise),
            np.random.default_rng(render))


def scripted_episode(scm: Scm, cfg: ScenarioConfig, seed: int, vehicle: VehicleState,
                     start: Mapping[str, str], change: Mapping[str, str],
                     episode_id: str | None = None) -> Episode:
    """Episode from an explicit start state and factor change; the tie-break noise is seeded."""
    _, noise_rng, render_rng = _streams(seed)
    return _assemble(scm, cfg, seed, vehicle, dict(start), dict(change), noise_rng, render_rng,
                     episode_id)


def generate_episode(scm: Scm, cfg: ScenarioConfig, seed: int,
                     episode_id: str | None = None) -> Episode:
    """Sample a compatible start uniformly, then one eventful factor change uniformly."""
    changes = eventful_changes(scm)
    if not changes:
        raise SimulatorError("model has no safe start state with an eventful factor change")
    state_rng, noise_rng, render_rng = _streams(seed)
    starts = sorted({(u, e) for u, e, _, _ in changes})
    u, e = starts[int(state_rng.integers(len(starts)))]
    options = [(f, v) for uu, ee, f, v in changes if (uu, ee) == (u, e)]
    f, v = options[int(state_rng.integers(len(options)))]
    z_start = scm.env_from_index(e).assignments
    factor = scm.factors[f]
    return _assemble(scm, cfg, seed, VehicleState.from_index(u), z_start,
                     {factor.name: factor.domain[v]}, noise_rng, render_rng, episode_id)


def _assemble(scm, cfg, seed, u, z_start, change, noise_rng, render_rng, episode_id) -> Episode:
    xi = float(noise_rng.random())
    env_s = EnvState(z_start, xi)
    env_e = env_s.with_values(**change)
    scm.env_index(env_e)  # validates names and values
    if scm.fy[u.index, scm.env_index(env_s)] & 1 == 0 or scm.fw[u.index, scm.env_index(env_s)]:
        raise SimulatorError(f"start {u}, {z_start} is not a safe cruising state")
    action = select_action(scm, u, env_e)
    end = evolve(scm, u, env_e, do(action))
    causal = tuple(name for name in scm.factor_names if env_s.assignments[name] != env_e.assignments[name])
    trace = ((SafeState(u, env_s), action, end),)
    narration, reasoning = template_caption(trace, causal)
    domains = {fac.name: fac.domain for fac in scm.factors}
    ep = Episode(
        id=episode_id or f"ep-{int(seed):016x}", state_trace=trace,
        signals=synth_signals(u, end.vehicle, cfg.frame_dims[0]),
        narration=narration, reasoning=reasoning, causal_label=causal, spurious_labels=(),
        clip=None, seed=int(seed), factor_domains=domains, noise_sigma=cfg.noise_sigma,
    )
    ep.clip = render_frames(ep, cfg.frame_dims, cfg.noise_sigma, render_rng)
    return ep


def render_clip(episode: Episode, cfg: ScenarioConfig) -> np.ndarray:
    """Frames for an episode; a pure function of the episode's seed, labels and config."""
    _, _, render_rng = _streams(episode.seed)
    return render_frames(episode, cfg.frame_dims, cfg.noise_sigma, render_rng)


def _rerender(episode: Episode) -> np.ndarray | None:
    if episode.clip is None:
        return None
    _, _, render_rng = _streams(episode.seed)
    return render_frames(episode, episode.clip.shape[:3], episode.noise_sigma, render_rng)


def inject_spurious(episode: Episode, factor: str, rho: float, rng: np.random.Generator,
                    target_action: str = "stop", base_rate: float = 0.5) -> Episode:
    """Plant a cue that copies ``action == target_action`` with probability ``rho`` and is
    otherwise on with probability ``base_rate``.  The model tables never read it.

    With ``base_rate`` equal to the target action's frequency, the phi coefficient
    between cue and action is ``rho``.
    """
    if factor in episode.causal_label:
        raise SimulatorError(f"{factor!r} is a true cause of episode {episode.id}")
    if factor in episode.factor_domains:
        raise SimulatorError(f"{factor!r} is a modelled factor; spurious cues must be extra")
    if not 0.0 <= rho <= 1.0 or not 0.0 <= base_rate <= 1.0:
        raise SimulatorError(f"rho and base_rate must lie in [0, 1], got {rho}, {base_rate}")
    copy = rng.random() < rho
    coin = rng.random() < base_rate
    on = (episode.action == target_action) if copy else coin
    spurious = {**episode.spurious, factor: SPURIOUS_DOMAIN[int(on)]}
    labels = episode.spurious_labels + (() if factor in episode.spurious_labels else (factor,))
    ep = replace(episode, spurious=spurious, spurious_labels=labels, clip=None)
    ep.clip = _rerender(replace(ep, clip=episode.clip))
    return ep


def cooccurrence(episodes: Sequence[Episode], factor: str, action: str) -> dict:
    """Phi coefficient between the cue being on and the action, plus the conditional rates."""
    s = np.array([ep.spurious.get(factor) == "on" for ep in episodes], dtype=float)
    t = np.array([ep.action == action for ep in episodes], dtype=float)
    denom = np.sqrt(s.var() * t.var())
    phi = float(((s - s.mean()) * (t - t.mean())).mean() / denom) if denom > 0 else 0.0
    rate = lambda m: float(s[m].mean()) if m.any() else float("nan")  # noqa: E731
    return {"phi": phi, "p_on": float(s.mean()), "p_action": float(t.mean()),
            "p_on_given_action": rate(t == 1), "p_on_given_other": rate(t == 0)}


def replay(scm: Scm, episode: Episode) -> list[tuple[str, SafeState]]:
    """Re-run the model along the trace: (selected action, forced end state) per step."""
    out = []
    for start, _, end in episode.state_trace:
        a = select_action(scm, start.vehicle, end.env)
        out.append((a, evolve(scm, start.vehicle, end.env, do(a))))
    return out


def episode_seed(base_seed: int, index: int) -> int:
    """Per-episode stream seed: a 64-bit mix of the base seed, xor the episode index."""
    z = (int(base_seed) + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return z ^ int(index)
