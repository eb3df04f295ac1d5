"""Ready-made models: the urban traffic world and random tables for sweeps."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .model import (ACTIONS, DANGERS, N_VEHICLE, SAFE, SPEEDS, EnvFactor, Scm, VehicleState,
                    build_dsdag, validate_tables)

# Factor pool in declaration order; the first three form the traffic-light scene.
FACTOR_POOL = (
    EnvFactor("traffic_light", ("green", "yellow", "red")),
    EnvFactor("lead_distance", ("far", "near")),
    EnvFactor("weather", ("clear", "rain")),
    EnvFactor("pedestrian", ("none", "crossing")),
    EnvFactor("road_curve", ("straight", "sharp")),
)

_MOVING_FAST = ("medium", "fast")


def traffic_danger(u: VehicleState, z: Mapping[str, str]) -> str:
    if u.speed == "stopped":
        return SAFE
    if z.get("traffic_light") == "red":
        return "violation"
    if z.get("pedestrian") == "crossing":
        return "collision"
    if z.get("traffic_light") == "yellow" and u.speed in _MOVING_FAST:
        return "violation"
    if z.get("lead_distance") == "near" and u.speed in _MOVING_FAST:
        return "collision"
    if z.get("weather") == "rain" and u.speed == "fast":
        return "fall" if u.loading == "heavy" else "loss_of_control"
    if z.get("road_curve") == "sharp" and u.speed == "fast":
        return "loss_of_control"
    return SAFE


def traffic_actions(u: VehicleState, z: Mapping[str, str]) -> tuple[str, ...]:
    if traffic_danger(u, z) == SAFE:
        return ("maintain",)
    if z.get("traffic_light") == "red" or z.get("pedestrian") == "crossing":
        return ("stop",)
    return ("decelerate",)


def traffic_transition(u: VehicleState, z: Mapping[str, str], action: str) -> VehicleState:
    """Nominal effect of an action, then brake one bin at a time until safe."""
    s = SPEEDS.index(u.speed)
    if action == "accelerate":
        out = u.replace(speed=SPEEDS[min(s + 1, 3)])
    elif action == "decelerate":
        out = u.replace(speed=SPEEDS[max(s - 1, 0)])
    elif action == "stop":
        out = u.replace(speed="stopped")
    elif action == "turn_left":
        out = u.replace(heading="left")
    elif action == "turn_right":
        out = u.replace(heading="right")
    elif action == "lane_change":
        out = u.replace(heading="straight")
    elif action == "reverse":
        out = u.replace(speed="slow", heading="straight")
    else:
        out = u
    while traffic_danger(out, z) != SAFE:
        out = out.replace(speed=SPEEDS[SPEEDS.index(out.speed) - 1])
    return out


def traffic_scm(num_factors: int = 3) -> Scm:
    """Urban scene with the first ``num_factors`` factors of :data:`FACTOR_POOL`."""
    if not 1 <= num_factors <= len(FACTOR_POOL):
        raise ValueError(f"num_factors must be in [1, {len(FACTOR_POOL)}], got {num_factors}")
    factors = FACTOR_POOL[:num_factors]
    names = [f.name for f in factors]

    def env(values):
        return dict(zip(names, values))

    return build_dsdag(
        factors,
        fw=lambda u, values: traffic_danger(u, env(values)),
        fy=lambda u, values: traffic_actions(u, env(values)),
        fxe=lambda u, values, a: traffic_transition(u, env(values), a),
    )


def random_scm(rng: np.random.Generator, domain_sizes, p_safe: float = 0.5,
               max_admissible: int = 3) -> Scm:
    """Random but valid tables: stopped vehicles are always safe, so ``fxe`` can stay safe."""
    factors = tuple(EnvFactor(f"f{i}", tuple(f"v{j}" for j in range(d)))
                    for i, d in enumerate(domain_sizes))
    n_env = int(np.prod(domain_sizes))
    fw = rng.integers(1, len(DANGERS), size=(N_VEHICLE, n_env)).astype(np.int8)
    fw[rng.random((N_VEHICLE, n_env)) < p_safe] = 0
    stopped = np.array([VehicleState.from_index(i).speed == "stopped" for i in range(N_VEHICLE)])
    fw[stopped] = 0

    n_act = len(ACTIONS)
    sizes = rng.integers(1, max_admissible + 1, size=(N_VEHICLE, n_env))
    keys = rng.random((N_VEHICLE, n_env, n_act))
    ranks = keys.argsort(axis=-1).argsort(axis=-1)
    chosen = ranks < sizes[..., None]
    fy = (chosen * (1 << np.arange(n_act))).sum(axis=-1).astype(np.int64)
    fy[fw == 0] |= 1  # maintain stays admissible whenever nothing is at risk

    safe = fw == 0                                     # [vehicle, env]
    keys = rng.random((N_VEHICLE, n_env, n_act, N_VEHICLE))
    keys = np.where(safe.T[None, :, None, :], keys, -1.0)
    fxe = keys.argmax(axis=-1).astype(np.int16)
    scm = Scm(factors, fw, fy, fxe)
    validate_tables(scm)
    return scm


def single_tie_scm() -> Scm:
    """One-factor model where a moving car facing an obstacle may stop or change lanes."""
    obstacle = EnvFactor("obstacle", ("clear", "blocked"))

    def fw(u, values):
        return "collision" if values[0] == "blocked" and u.speed != "stopped" else SAFE

    def fy(u, values):
        if fw(u, values) == SAFE:
            return ("maintain",)
        return ("stop", "lane_change")

    def fxe(u, values, a):
        return u.replace(speed="stopped") if values[0] == "blocked" else u

    return build_dsdag([obstacle], fw, fy, fxe)
