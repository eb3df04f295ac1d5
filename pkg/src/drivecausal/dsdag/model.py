"""Driving-state structural causal model over discrete vehicle and environment bins.

The graph has five nodes: start state ``X_s``, environment ``Z``, action ``Y``,
danger ``W`` and end state ``X_e``.  Three mechanism tables drive it:

* ``fw``  -- danger reached if the current vehicle state is kept in environment z;
* ``fy``  -- the admissible action set in (u, z); noise breaks ties uniformly;
* ``fxe`` -- the vehicle state reached after forcing an action.

Environments are flattened with the first factor most significant, vehicle
states as ``speed * 6 + heading * 2 + loading``.
"""
from __future__ import annotations

import graphlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

SPEEDS = ("stopped", "slow", "medium", "fast")
HEADINGS = ("straight", "left", "right")
LOADINGS = ("light", "heavy")
ACTIONS = ("maintain", "accelerate", "decelerate", "stop",
           "turn_left", "turn_right", "lane_change", "reverse")
SAFE = "safe"
DANGERS = (SAFE, "collision", "fall", "loss_of_control", "violation")

NODES = ("X_s", "Z", "Y", "W", "X_e")
CANONICAL_EDGES = frozenset({("X_s", "Y"), ("Z", "Y"), ("Z", "W"), ("X_s", "W"),
                             ("Y", "X_e"), ("Z", "X_e")})
N_VEHICLE = len(SPEEDS) * len(HEADINGS) * len(LOADINGS)


class DsdagError(ValueError):
    """Base class for model construction and query errors."""


class CycleError(DsdagError):
    def __init__(self, edges):
        self.edges = list(edges)
        super().__init__(f"causal graph has a cycle through edges {self.edges}")


class IncompleteTableError(DsdagError):
    pass


class DomainError(DsdagError):
    pass


@dataclass(frozen=True)
class EnvFactor:
    name: str
    domain: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(self.domain))
        if len(self.domain) < 2:
            raise DomainError(f"factor {self.name!r} needs at least 2 values, got {self.domain}")
        if len(set(self.domain)) != len(self.domain):
            raise DomainError(f"factor {self.name!r} has repeated values")


@dataclass(frozen=True, order=True)
class VehicleState:
    speed: str = "medium"
    heading: str = "straight"
    loading: str = "light"

    def __post_init__(self):
        for value, allowed, what in ((self.speed, SPEEDS, "speed"),
                                     (self.heading, HEADINGS, "heading"),
                                     (self.loading, LOADINGS, "loading")):
            if value not in allowed:
                raise DomainError(f"{what} {value!r} not in {allowed}")

    @property
    def index(self) -> int:
        return (SPEEDS.index(self.speed) * len(HEADINGS) + HEADINGS.index(self.heading)) \
            * len(LOADINGS) + LOADINGS.index(self.loading)

    @classmethod
    def from_index(cls, i: int) -> "VehicleState":
        s, rest = divmod(int(i), len(HEADINGS) * len(LOADINGS))
        h, l = divmod(rest, len(LOADINGS))
        return cls(SPEEDS[s], HEADINGS[h], LOADINGS[l])

    def replace(self, **kw) -> "VehicleState":
        return VehicleState(**{**self.__dict__, **kw})

    @staticmethod
    def all() -> list["VehicleState"]:
        return [VehicleState.from_index(i) for i in range(N_VEHICLE)]


@dataclass(frozen=True)
class EnvState:
    """Environment snapshot: one value per factor plus the tie-break noise in [0, 1]."""

    assignments: Mapping[str, str]
    noise: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "assignments", dict(self.assignments))
        if not 0.0 <= self.noise <= 1.0:
            raise DomainError(f"noise must lie in [0, 1], got {self.noise}")

    def with_values(self, **kw) -> "EnvState":
        return EnvState({**self.assignments, **kw}, self.noise)


@dataclass(frozen=True)
class SafeState:
    vehicle: VehicleState
    env: EnvState


@dataclass(frozen=True)
class Intervention:
    """``do(Y=action)``; ``action=None`` withholds any action."""

    action: str | None


def do(action: str | None) -> Intervention:
    return Intervention(action)


@dataclass
class Scm:
    factors: tuple[EnvFactor, ...]
    fw: np.ndarray      # [N_VEHICLE, n_env] danger index
    fy: np.ndarray      # [N_VEHICLE, n_env] admissible-action bitmask
    fxe: np.ndarray     # [N_VEHICLE, n_env, len(ACTIONS)] vehicle index
    edges: frozenset = CANONICAL_EDGES
    _names: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._names = {f.name: i for i, f in enumerate(self.factors)}

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(f.domain) for f in self.factors)

    @property
    def n_env(self) -> int:
        return int(np.prod(self.dims))

    @property
    def factor_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    def factor(self, name: str) -> EnvFactor:
        try:
            return self.factors[self._names[name]]
        except KeyError:
            raise DomainError(f"unknown factor {name!r}") from None

    def env_index(self, z) -> int:
        values = z.assignments if isinstance(z, EnvState) else z
        if set(values) != set(self._names):
            raise DomainError(f"environment must assign exactly {sorted(self._names)}, "
                              f"got {sorted(values)}")
        idx = 0
        for f in self.factors:
            v = values[f.name]
            if v not in f.domain:
                raise DomainError(f"value {v!r} not in domain of {f.name}: {f.domain}")
            idx = idx * len(f.domain) + f.domain.index(v)
        return idx

    def env_from_index(self, i: int, noise: float = 0.5) -> EnvState:
        values = {}
        for f in reversed(self.factors):
            i, r = divmod(int(i), len(f.domain))
            values[f.name] = f.domain[r]
        return EnvState({f.name: values[f.name] for f in self.factors}, noise)

    def environments(self) -> Iterable[EnvState]:
        for i in range(self.n_env):
            yield self.env_from_index(i)

    def admissible(self, u: VehicleState, z) -> list[str]:
        mask = int(self.fy[u.index, self.env_index(z)])
        return [a for k, a in enumerate(ACTIONS) if mask >> k & 1]


# -- construction ------------------------------------------------------------

def check_graph(edges: Iterable[tuple[str, str]]) -> frozenset:
    """Topologically sort the graph, then require the canonical edge set."""
    edges = frozenset((str(a), str(b)) for a, b in edges)
    ts = graphlib.TopologicalSorter()
    for n in NODES:
        ts.add(n)
    for a, b in edges:
        ts.add(b, a)
    try:
        tuple(ts.static_order())
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise CycleError([(cycle[i], cycle[i + 1]) for i in range(len(cycle) - 1)]) from None
    unknown = {n for e in edges for n in e} - set(NODES)
    if unknown:
        raise DsdagError(f"unknown graph nodes {sorted(unknown)}")
    if edges != CANONICAL_EDGES:
        raise DsdagError(f"edge set must be {sorted(CANONICAL_EDGES)}; "
                         f"missing {sorted(CANONICAL_EDGES - edges)}, extra {sorted(edges - CANONICAL_EDGES)}")
    return edges


def _lookup(table, key, what: str, cell_desc: Callable[[], str]):
    if callable(table):
        return table(*key)
    try:
        return table[key]
    except KeyError:
        raise IncompleteTableError(f"{what} table has no entry for {cell_desc()}") from None


def build_dsdag(factors: Sequence[EnvFactor | tuple[str, Sequence[str]]],
                fw, fy, fxe, edges: Iterable[tuple[str, str]] = CANONICAL_EDGES) -> Scm:
    """Validate a model description and compile its tables.

    ``fw``, ``fy`` and ``fxe`` are either callables or mappings.  Keys are
    ``(VehicleState, env_values)`` for ``fw``/``fy`` and
    ``(VehicleState, env_values, action)`` for ``fxe``, where ``env_values`` is a
    tuple of factor values in declaration order.  ``fy`` yields an iterable of
    admissible actions; ``fxe`` yields a :class:`VehicleState`.
    """
    edges = check_graph(edges)
    facs = tuple(f if isinstance(f, EnvFactor) else EnvFactor(f[0], tuple(f[1])) for f in factors)
    names = [f.name for f in facs]
    if len(set(names)) != len(names):
        raise DomainError(f"factor names must be unique: {names}")
    if not facs:
        raise DomainError("at least one environment factor is required")

    dims = tuple(len(f.domain) for f in facs)
    n_env = int(np.prod(dims))
    envs = list(itertools.product(*(f.domain for f in facs)))
    vehicles = VehicleState.all()
    fw_arr = np.zeros((N_VEHICLE, n_env), dtype=np.int8)
    fy_arr = np.zeros((N_VEHICLE, n_env), dtype=np.int64)
    fxe_arr = np.zeros((N_VEHICLE, n_env, len(ACTIONS)), dtype=np.int16)

    def desc(u, env, a=None):
        cell = f"vehicle={u}, env={dict(zip(names, env))}"
        return cell + (f", action={a}" if a is not None else "")

    for u in vehicles:
        for e, env in enumerate(envs):
            danger = _lookup(fw, (u, env), "fw", lambda: desc(u, env))
            if danger not in DANGERS:
                raise DomainError(f"unknown danger {danger!r} at {desc(u, env)}")
            fw_arr[u.index, e] = DANGERS.index(danger)
            acts = list(_lookup(fy, (u, env), "fy", lambda: desc(u, env)))
            if not acts:
                raise IncompleteTableError(f"fy lists no admissible action at {desc(u, env)}")
            mask = 0
            for a in acts:
                if a not in ACTIONS:
                    raise DomainError(f"action {a!r} not in {ACTIONS}")
                mask |= 1 << ACTIONS.index(a)
            fy_arr[u.index, e] = mask
            for k, a in enumerate(ACTIONS):
                out = _lookup(fxe, (u, env, a), "fxe", lambda: desc(u, env, a))
                if not isinstance(out, VehicleState):
                    raise DomainError(f"fxe must return a VehicleState at {desc(u, env, a)}")
                fxe_arr[u.index, e, k] = out.index
    scm = Scm(facs, fw_arr, fy_arr, fxe_arr, edges)
    validate_tables(scm)
    return scm


def validate_tables(scm: Scm) -> None:
    """Table shapes, admissible sets, and the closed-loop safety of ``fxe``."""
    n_env = scm.n_env
    if scm.fw.shape != (N_VEHICLE, n_env) or scm.fy.shape != (N_VEHICLE, n_env) \
            or scm.fxe.shape != (N_VEHICLE, n_env, len(ACTIONS)):
        raise IncompleteTableError(
            f"table shapes {scm.fw.shape}/{scm.fy.shape}/{scm.fxe.shape} do not cover "
            f"{N_VEHICLE} vehicle states x {n_env} environments")
    if np.any(scm.fy == 0):
        u, e = np.argwhere(scm.fy == 0)[0]
        raise IncompleteTableError(
            f"fy has no admissible action for {VehicleState.from_index(u)}, "
            f"{scm.env_from_index(e).assignments}")
    if np.any(scm.fy >> len(ACTIONS)):
        raise DomainError("fy bitmask references actions outside the action set")
    end_danger = scm.fw[scm.fxe, np.arange(n_env)[None, :, None]]
    if np.any(end_danger != 0):
        u, e, a = np.argwhere(end_danger != 0)[0]
        raise DsdagError(
            f"fxe leads to an unsafe end state: {VehicleState.from_index(u)} in "
            f"{scm.env_from_index(e).assignments} under {ACTIONS[a]} -> "
            f"{VehicleState.from_index(scm.fxe[u, e, a])}")


# -- mechanisms ----------------------------------------------------------------

def _pick(n_admissible: int, xi: float) -> int:
    return min(int(xi * n_admissible), n_admissible - 1)


def hidden_danger(scm: Scm, u: VehicleState, z) -> str:
    """Danger reached if the vehicle keeps state ``u`` in environment ``z``; noise is ignored."""
    return DANGERS[scm.fw[u.index, scm.env_index(z)]]


def select_action(scm: Scm, u: VehicleState, z, rng: np.random.Generator | None = None) -> str:
    """Draw an admissible action; the noise (from ``rng`` or ``z.noise``) breaks ties uniformly."""
    acts = scm.admissible(u, z)
    if len(acts) == 1:
        if rng is not None:
            rng.random()  # keep the noise stream aligned regardless of tie structure
        return acts[0]
    if rng is not None:
        xi = float(rng.random())
    elif isinstance(z, EnvState):
        xi = z.noise
    else:
        raise ValueError("tie-break needs an rng or an EnvState carrying noise")
    return acts[_pick(len(acts), xi)]


def evolve(scm: Scm, u: VehicleState, z, intervention: Intervention) -> str | SafeState:
    """Propagate an intervention: withheld action gives the danger, a forced one the end state."""
    if intervention.action is None:
        return hidden_danger(scm, u, z)
    if intervention.action not in ACTIONS:
        raise DomainError(f"intervention action {intervention.action!r} not in {ACTIONS}")
    e = scm.env_index(z)
    end = VehicleState.from_index(scm.fxe[u.index, e, ACTIONS.index(intervention.action)])
    env = z if isinstance(z, EnvState) else EnvState(z)
    return SafeState(end, env)
