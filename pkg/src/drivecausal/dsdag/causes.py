"""Key-factor identification: which environment factor best explains an observed action.

For a factor ``g`` with values ``v_1..v_k`` let ``p_i`` be the probability, over
a uniform draw of the remaining factors and of the tie-break noise on a fixed
grid, that the action mechanism picks the observed action *and* forcing it
reaches a safe end state, given ``g = v_i``.  The factor's score is

    score(g) = sum_i p_i * w_i,   w_i = p_i / sum_j p_j

i.e. the per-value likelihoods weighted by the posterior over ``g``'s value
under a uniform prior.  A factor that pins the action down scores
``max_i p_i``; an irrelevant factor scores the marginal ``P(action)``.
Scores are computed exactly from integer counts with :class:`fractions.Fraction`.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .. import kernels
from .model import ACTIONS, DANGERS, SAFE, DomainError, DsdagError, Scm, VehicleState

NOISE_GRID = 16
ORACLE_LIMIT = 10 ** 6


class InconsistentObservation(DsdagError):
    pass


@dataclass(frozen=True)
class CausalExplanation:
    vehicle: VehicleState
    action: str
    ranked: tuple[tuple[str, float], ...]

    @property
    def top(self) -> str:
        return self.ranked[0][0]

    @property
    def scores(self) -> dict[str, float]:
        return dict(self.ranked)

    def to_dict(self) -> dict:
        return {"vehicle": vars(self.vehicle), "action": self.action,
                "ranked": [{"factor": f, "score": s} for f, s in self.ranked]}


def _rank(scm: Scm, scores: list[float]) -> tuple[tuple[str, float], ...]:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple((scm.factors[i].name, scores[i]) for i in order)


def _score(counts, n_other: int) -> float:
    probs = [Fraction(int(c), n_other) for c in counts]
    total = sum(probs)
    if total == 0:
        return 0.0
    return float(sum(p * p for p in probs) / total)


def _check_action(action: str) -> int:
    if action not in ACTIONS:
        raise DomainError(f"action {action!r} not in {ACTIONS}")
    return ACTIONS.index(action)


def key_factors(scm: Scm, u: VehicleState, action: str, grid: int = NOISE_GRID) -> CausalExplanation:
    """Rank factors by score; ties keep declaration order."""
    a = _check_action(action)
    fy_row = scm.fy[u.index]
    end_states = scm.fxe[u.index, :, a]
    safe_after = (scm.fw[end_states, np.arange(scm.n_env)] == DANGERS.index(SAFE)).astype(np.uint8)
    counts = kernels.fv_counts(fy_row, safe_after, scm.dims, a, grid)
    if counts.sum() == 0:
        raise InconsistentObservation(
            f"inconsistent observation: {action} is never selected from {u}")
    scores, off = [], 0
    for d in scm.dims:
        n_other = (scm.n_env // d) * grid
        scores.append(_score(counts[off:off + d], n_other))
        off += d
    return CausalExplanation(u, action, _rank(scm, scores))


def oracle_key_factors(scm: Scm, u: VehicleState, action: str,
                       grid: int = NOISE_GRID) -> CausalExplanation:
    """Reference computation: one flat loop over every joint assignment and noise point."""
    a = _check_action(action)
    if scm.n_env * grid > ORACLE_LIMIT:
        raise DsdagError(f"joint space {scm.n_env * grid} exceeds oracle limit {ORACLE_LIMIT}")
    domains = [f.domain for f in scm.factors]
    tallies = [[0] * len(d) for d in domains]
    ui = u.index
    for values in itertools.product(*[range(len(d)) for d in domains]):
        e = 0
        for v, d in zip(values, domains):
            e = e * len(d) + v
        mask = int(scm.fy[ui, e])
        admissible = [k for k in range(len(ACTIONS)) if mask >> k & 1]
        end = int(scm.fxe[ui, e, a])
        safe = DANGERS[int(scm.fw[end, e])] == SAFE
        for g in range(grid):
            xi = (g + 0.5) / grid
            chosen = admissible[min(int(xi * len(admissible)), len(admissible) - 1)]
            if chosen == a and safe:
                for f, v in enumerate(values):
                    tallies[f][v] += 1
    if not any(any(t) for t in tallies):
        raise InconsistentObservation(
            f"inconsistent observation: {action} is never selected from {u}")
    scores = []
    for f, d in enumerate(domains):
        n_other = grid
        for h, other in enumerate(domains):
            if h != f:
                n_other *= len(other)
        probs = [Fraction(c, n_other) for c in tallies[f]]
        total = sum(probs, Fraction(0))
        scores.append(0.0 if total == 0 else float(sum((p * p for p in probs), Fraction(0)) / total))
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return CausalExplanation(u, action, tuple((scm.factors[i].name, scores[i]) for i in order))
