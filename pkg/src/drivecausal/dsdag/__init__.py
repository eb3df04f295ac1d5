from .causes import (NOISE_GRID, CausalExplanation, InconsistentObservation, key_factors,
                     oracle_key_factors)
from .model import (ACTIONS, CANONICAL_EDGES, DANGERS, HEADINGS, LOADINGS, SAFE, SPEEDS,
                    CycleError, DomainError, DsdagError, EnvFactor, EnvState, IncompleteTableError,
                    Intervention, SafeState, Scm, VehicleState, build_dsdag, do, evolve,
                    hidden_danger, select_action)
from .scenarios import FACTOR_POOL, random_scm, single_tie_scm, traffic_scm

__all__ = [
    "ACTIONS", "CANONICAL_EDGES", "DANGERS", "HEADINGS", "LOADINGS", "SAFE", "SPEEDS",
    "CycleError", "DomainError", "DsdagError", "EnvFactor", "EnvState", "IncompleteTableError",
    "Intervention", "SafeState", "Scm", "VehicleState", "build_dsdag", "do", "evolve",
    "hidden_danger", "select_action", "NOISE_GRID", "CausalExplanation",
    "InconsistentObservation", "key_factors", "oracle_key_factors", "FACTOR_POOL",
    "random_scm", "single_tie_scm", "traffic_scm",
]
