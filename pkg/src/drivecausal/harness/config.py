"""Run configuration, stored as JSON and embedded verbatim in every report."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..model import ModelDims
from ..simulator import ScenarioConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    batch_size: int = 16
    epochs: int = 40
    initial_lr: float = 0.05
    lr_decay_epoch: int = 16
    clip_norm: float = 1.0
    lam: float = 0.01
    beta: float = 0.5
    epsilon: float = 0.1
    channels: int = 4
    dim: int = 64
    layers: int = 2
    heads: int = 4
    attn_blocks: int = 2
    max_len: int = 16
    use_cam: bool = True
    alpha_axis: str = "spatial"
    norm_prefix: bool = False
    gate_lr_scale: float = 100.0
    include_sparse: bool = True
    beam: int = 1
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    seed: int = 0

    def __post_init__(self):
        positive = ("batch_size", "epochs", "channels", "dim", "layers", "heads", "max_len", "beam")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.initial_lr <= 0:
            raise ConfigError(f"initial_lr must be > 0, got {self.initial_lr}")
        if self.gate_lr_scale <= 0:
            raise ConfigError(f"gate_lr_scale must be > 0, got {self.gate_lr_scale}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.lr_decay_epoch < 0:
            raise ConfigError(f"lr_decay_epoch must be >= 0, got {self.lr_decay_epoch}")
        for name in ("lam", "beta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0 <= self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} must be divisible by heads {self.heads}")
        if self.attn_blocks < 0:
            raise ConfigError("attn_blocks must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def lr_at(self, epoch: int) -> float:
        """Step decay: x0.1 from ``lr_decay_epoch`` on (0 disables the decay)."""
        if self.lr_decay_epoch and epoch >= self.lr_decay_epoch:
            return self.initial_lr * 0.1
        return self.initial_lr

    def model_dims(self) -> ModelDims:
        f, h, w = self.scenario.frame_dims
        return ModelDims(f, h, w, self.channels, self.dim, self.layers, self.heads,
                         self.attn_blocks, self.max_len, self.use_cam, self.alpha_axis,
                         self.norm_prefix)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["scenario"]["frame_dims"] = list(self.scenario.frame_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        scen = d.pop("scenario", {})
        if not isinstance(scen, ScenarioConfig):
            s_known = {f.name for f in fields(ScenarioConfig)}
            if set(scen) - s_known:
                raise ConfigError(f"unknown scenario keys: {sorted(set(scen) - s_known)}")
            scen = ScenarioConfig(**scen)
        try:
            return cls(scenario=scen, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_seed(self, seed: int) -> "Config":
        return replace(self, seed=int(seed), scenario=replace(self.scenario, seed=int(seed)))


def load_config(path) -> Config:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return Config.from_dict(data)


def save_config(cfg: Config, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
