"""Text format for model descriptions (header ``DSDAG/1``).

Example::

    DSDAG/1
    # factors: name followed by its ordered domain
    factor traffic_light: green yellow red
    factor lead_distance: far near
    edge X_s -> Y
    ...
    fw speed=stopped -> safe
    fw traffic_light=red -> violation
    fw -> safe
    fy traffic_light=red speed=slow -> stop
    fy -> maintain
    fxe action=stop -> speed=stopped
    fxe action=decelerate -> speed=-1
    fxe -> speed=. heading=. loading=.

Each table row lists ``key=value`` conditions over ``speed``, ``heading``,
``loading``, the factor names and (``fxe`` only) ``action``.  Omitted keys or
``*`` match anything; the first matching row wins.  ``fy`` outputs are
comma-separated action lists.  ``fxe`` outputs set vehicle fields: an explicit
bin, ``.`` to keep the input value, or ``+1``/``-1`` to shift the speed bin.
Every cell of every table must be covered, else the reader names the gap.
"""
from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from .model import (ACTIONS, DANGERS, HEADINGS, LOADINGS, N_VEHICLE, SPEEDS, DsdagError,
                    EnvFactor, IncompleteTableError, Scm, VehicleState, check_graph,
                    validate_tables)

MAGIC = "DSDAG/1"
_VEHICLE_KEYS = {"speed": SPEEDS, "heading": HEADINGS, "loading": LOADINGS}


class FormatError(DsdagError):
    pass


def dumps(scm: Scm) -> str:
    """Serialise with one explicit row per cell (no wildcards)."""
    lines = [MAGIC]
    for f in scm.factors:
        lines.append(f"factor {f.name}: {' '.join(f.domain)}")
    for a, b in sorted(scm.edges):
        lines.append(f"edge {a} -> {b}")
    envs = list(scm.environments())
    for u in VehicleState.all():
        ucond = f"speed={u.speed} heading={u.heading} loading={u.loading}"
        for e, z in enumerate(envs):
            zcond = " ".join(f"{k}={v}" for k, v in z.assignments.items())
            lines.append(f"fw {ucond} {zcond} -> {DANGERS[scm.fw[u.index, e]]}")
            acts = ",".join(scm.admissible(u, z))
            lines.append(f"fy {ucond} {zcond} -> {acts}")
            for k, a in enumerate(ACTIONS):
                out = VehicleState.from_index(scm.fxe[u.index, e, k])
                lines.append(f"fxe {ucond} {zcond} action={a} -> speed={out.speed} "
                             f"heading={out.heading} loading={out.loading}")
    return "\n".join(lines) + "\n"


def dump(scm: Scm, path) -> None:
    Path(path).write_text(dumps(scm))


def load(path) -> Scm:
    return loads(Path(path).read_text())


def loads(text: str) -> Scm:
    raw = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    numbered = [(i + 1, ln) for i, ln in enumerate(raw) if ln]
    if not numbered or numbered[0][1] != MAGIC:
        got = numbered[0][1] if numbered else "<empty>"
        raise FormatError(f"expected header {MAGIC!r}, got {got!r}")

    factors: list[EnvFactor] = []
    edges: list[tuple[str, str]] = []
    rows: dict[str, list] = {"fw": [], "fy": [], "fxe": []}
    for lineno, ln in numbered[1:]:
        head, _, rest = ln.partition(" ")
        if head == "factor":
            name, sep, values = rest.partition(":")
            if not sep:
                raise FormatError(f"line {lineno}: factor needs 'name: values'")
            factors.append(EnvFactor(name.strip(), tuple(values.split())))
        elif head == "edge":
            a, sep, b = rest.partition("->")
            if not sep:
                raise FormatError(f"line {lineno}: edge needs 'A -> B'")
            edges.append((a.strip(), b.strip()))
        elif head in rows:
            cond, sep, out = rest.partition("->")
            if not sep:
                raise FormatError(f"line {lineno}: table row needs '->'")
            rows[head].append((lineno, _parse_pairs(cond, lineno), out.strip()))
        else:
            raise FormatError(f"line {lineno}: unknown directive {head!r}")

    check_graph(edges)
    if not factors:
        raise FormatError("no factors declared")
    names = [f.name for f in factors]
    if len(set(names)) != len(names):
        raise FormatError(f"duplicate factor names in {names}")
    domains = {**_VEHICLE_KEYS, **{f.name: f.domain for f in factors}}
    dims = [len(f.domain) for f in factors]
    n_env = int(np.prod(dims))

    fw = _fill("fw", rows["fw"], domains, names, None, n_env, lambda out, u, ln: _danger(out, ln))
    fy = _fill("fy", rows["fy"], domains, names, None, n_env, lambda out, u, ln: _actions(out, ln))
    fxe = _fill("fxe", rows["fxe"], domains, names, ACTIONS, n_env,
                lambda out, u, ln: _transition(out, u, ln))
    scm = Scm(tuple(factors), fw.astype(np.int8), fy.astype(np.int64), fxe.astype(np.int16),
              frozenset(edges))
    validate_tables(scm)
    return scm


def _parse_pairs(text: str, lineno: int) -> dict[str, str]:
    pairs = {}
    for tok in text.split():
        k, sep, v = tok.partition("=")
        if not sep:
            raise FormatError(f"line {lineno}: expected key=value, got {tok!r}")
        pairs[k] = v
    return pairs


def _danger(out: str, lineno: int) -> int:
    if out not in DANGERS:
        raise FormatError(f"line {lineno}: unknown danger {out!r}")
    return DANGERS.index(out)


def _actions(out: str, lineno: int) -> int:
    mask = 0
    for a in filter(None, (s.strip() for s in out.split(","))):
        if a not in ACTIONS:
            raise FormatError(f"line {lineno}: unknown action {a!r}")
        mask |= 1 << ACTIONS.index(a)
    if not mask:
        raise FormatError(f"line {lineno}: empty action list")
    return mask


def _transition(out: str, u: VehicleState, lineno: int) -> int:
    fields = {"speed": u.speed, "heading": u.heading, "loading": u.loading}
    for key, val in _parse_pairs(out, lineno).items():
        if key not in fields:
            raise FormatError(f"line {lineno}: unknown vehicle field {key!r}")
        if val == ".":
            continue
        if key == "speed" and val in ("+1", "-1"):
            s = SPEEDS.index(u.speed) + int(val)
            fields["speed"] = SPEEDS[min(max(s, 0), len(SPEEDS) - 1)]
        elif val in _VEHICLE_KEYS[key]:
            fields[key] = val
        else:
            raise FormatError(f"line {lineno}: {key}={val!r} not in {_VEHICLE_KEYS[key]}")
    return VehicleState(**fields).index


def _fill(what, rows, domains, names, actions, n_env, convert) -> np.ndarray:
    axes = ["speed", "heading", "loading"] + names + (["action"] if actions else [])
    all_domains = {**domains, "action": ACTIONS}
    shape = (N_VEHICLE, n_env) + ((len(ACTIONS),) if actions else ())
    table = np.full(shape, -1, dtype=np.int64)
    for lineno, cond, out in rows:
        allowed = []
        for ax in axes:
            v = cond.get(ax, "*")
            if v == "*":
                allowed.append(range(len(all_domains[ax])))
            elif v in all_domains[ax]:
                allowed.append((all_domains[ax].index(v),))
            else:
                raise FormatError(f"line {lineno}: {ax}={v!r} not in {tuple(all_domains[ax])}")
        unknown = set(cond) - set(axes)
        if unknown:
            raise FormatError(f"line {lineno}: unknown keys {sorted(unknown)}")
        for combo in itertools.product(*allowed):
            ui = (combo[0] * len(HEADINGS) + combo[1]) * len(LOADINGS) + combo[2]
            e = 0
            for name, v in zip(names, combo[3:3 + len(names)]):
                e = e * len(domains[name]) + v
            cell = (ui, e) + ((combo[-1],) if actions else ())
            if table[cell] == -1:
                table[cell] = convert(out, VehicleState.from_index(ui), lineno)
    if np.any(table == -1):
        cell = tuple(int(c) for c in np.argwhere(table == -1)[0])
        u = VehicleState.from_index(cell[0])
        env, rem = {}, cell[1]
        for name in reversed(names):
            rem, r = divmod(rem, len(domains[name]))
            env[name] = domains[name][r]
        env = {n: env[n] for n in names}
        extra = f", action={ACTIONS[cell[2]]}" if actions else ""
        raise IncompleteTableError(f"{what} row missing for cell vehicle={u}, env={env}{extra}")
    return table
