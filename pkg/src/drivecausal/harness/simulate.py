"""Dataset generation: episodes from the traffic world, optional planted cue, 80/10/10 split."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dsdag import Scm, traffic_scm
from ..dsdag import fileformat
from ..simulator import (Episode, cooccurrence, episode_seed, generate_episode, inject_spurious,
                         read_episodes, write_episodes)
from .config import Config

SPLITS = ("train", "val", "test")
SPLIT_RATIO = (0.8, 0.1, 0.1)


@dataclass
class Dataset:
    scm: Scm
    splits: dict[str, list[Episode]]

    def __getitem__(self, name: str) -> list[Episode]:
        return self.splits[name]


def split_counts(n: int) -> tuple[int, int, int]:
    n_train = int(round(n * SPLIT_RATIO[0]))
    n_val = int(round(n * SPLIT_RATIO[1]))
    return n_train, n_val, n - n_train - n_val


def simulate_episodes(cfg: Config) -> tuple[Scm, list[Episode]]:
    sc = cfg.scenario
    scm = traffic_scm(sc.num_factors)
    episodes = [generate_episode(scm, sc, episode_seed(sc.seed, i)) for i in range(sc.episodes)]
    if sc.spurious_rho > 0:
        # the cue's "off-action" rate equals the action's own frequency, so the
        # phi coefficient between cue and action comes out at rho
        rate = float(np.mean([ep.action == sc.spurious_action for ep in episodes]))
        rng = np.random.default_rng([sc.seed, 7])
        episodes = [inject_spurious(ep, sc.spurious_factor, sc.spurious_rho, rng,
                                    target_action=sc.spurious_action, base_rate=rate)
                    for ep in episodes]
    return scm, episodes


def split_episodes(episodes, seed: int) -> dict[str, list[Episode]]:
    order = np.random.default_rng([seed, 8]).permutation(len(episodes))
    n_train, n_val, _ = split_counts(len(episodes))
    cuts = (0, n_train, n_train + n_val, len(episodes))
    return {name: [episodes[i] for i in order[cuts[k]:cuts[k + 1]]]
            for k, name in enumerate(SPLITS)}


def simulate(cfg: Config) -> Dataset:
    scm, episodes = simulate_episodes(cfg)
    return Dataset(scm, split_episodes(episodes, cfg.scenario.seed))


def run_simulate(cfg: Config, out_dir) -> Dataset:
    """Write ``{train,val,test}.jsonl/.cdrv``, ``world.dsdag`` and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = simulate(cfg)
    fileformat.dump(data.scm, out / "world.dsdag")
    manifest = {"config": cfg.to_dict(), "splits": {}}
    for name in SPLITS:
        eps = data.splits[name]
        if eps:
            write_episodes(eps, out / name)
        manifest["splits"][name] = {"episodes": len(eps), "ids": [ep.id for ep in eps]}
    if cfg.scenario.spurious_rho > 0:
        every = [ep for name in SPLITS for ep in data.splits[name]]
        manifest["spurious"] = cooccurrence(every, cfg.scenario.spurious_factor,
                                            cfg.scenario.spurious_action)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return data


def load_dataset(data_dir) -> Dataset:
    root = Path(data_dir)
    if not (root / "manifest.json").exists():
        raise FileNotFoundError(f"{root}: no manifest.json, not a simulated dataset")
    manifest = json.loads((root / "manifest.json").read_text())
    splits = {name: (read_episodes(root / name) if manifest["splits"][name]["episodes"] else [])
              for name in SPLITS}
    return Dataset(fileformat.load(root / "world.dsdag"), splits)
