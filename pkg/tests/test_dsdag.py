import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drivecausal import kernels
from drivecausal.dsdag import (ACTIONS, CANONICAL_EDGES, SAFE, CycleError, DomainError,
                               EnvFactor, EnvState, IncompleteTableError,
                               InconsistentObservation, VehicleState, build_dsdag, do, evolve,
                               hidden_danger, key_factors, oracle_key_factors, random_scm,
                               select_action, single_tie_scm, traffic_scm)
from drivecausal.dsdag import fileformat
from drivecausal.dsdag.fileformat import FormatError

FIG1_ENV = {"traffic_light": "red", "lead_distance": "far", "weather": "clear"}


@pytest.fixture(scope="module")
def scm():
    return traffic_scm(3)


def test_canonical_graph_accepted(scm):
    assert scm.edges == CANONICAL_EDGES


def test_cycle_rejected():
    with pytest.raises(CycleError):
        build_dsdag([("a", ("x", "y"))], lambda u, v: SAFE, lambda u, v: ("maintain",),
                    lambda u, v, a: u, edges=set(CANONICAL_EDGES) | {("X_e", "X_s")})


def test_missing_table_cell_named():
    fw = {(u, (v,)): SAFE for u in VehicleState.all() for v in ("x", "y")}
    del fw[(VehicleState("fast"), ("y",))]
    with pytest.raises(IncompleteTableError, match="fast"):
        build_dsdag([("a", ("x", "y"))], fw, lambda u, v: ("maintain",), lambda u, v, a: u)


def test_unsafe_transition_rejected():
    with pytest.raises(Exception, match="unsafe end state"):
        build_dsdag([("a", ("x", "y"))],
                    lambda u, v: "collision" if u.speed == "fast" else SAFE,
                    lambda u, v: ("stop",), lambda u, v, a: u)


def test_domain_errors(scm):
    with pytest.raises(DomainError):
        VehicleState("warp")
    with pytest.raises(DomainError):
        scm.env_index({"traffic_light": "blue", "lead_distance": "far", "weather": "clear"})
    with pytest.raises(DomainError):
        scm.env_index({"traffic_light": "red"})
    with pytest.raises(DomainError):
        EnvFactor("solo", ("only",))


def test_hidden_danger_examples(scm):
    fast = VehicleState("fast")
    assert hidden_danger(scm, fast, {**FIG1_ENV, "lead_distance": "near"}) == "violation"
    for z in scm.environments():
        assert hidden_danger(scm, VehicleState("stopped"), z) == SAFE
    green = {"traffic_light": "green", "lead_distance": "far", "weather": "clear"}
    assert hidden_danger(scm, VehicleState("medium"), green) == SAFE


def test_red_light_mandates_stop(scm):
    assert select_action(scm, VehicleState("medium"), FIG1_ENV,
                         np.random.default_rng(0)) == "stop"


def test_single_admissible_ignores_noise(scm):
    for xi in (0.0, 0.3, 0.99):
        assert select_action(scm, VehicleState("medium"), EnvState(FIG1_ENV, xi)) == "stop"


def test_two_way_tie_splits_evenly():
    tie = single_tie_scm()
    rng = np.random.default_rng(1)
    z = {"obstacle": "blocked"}
    picks = [select_action(tie, VehicleState("medium"), z, rng) for _ in range(10_000)]
    share = picks.count("stop") / len(picks)
    assert abs(share - 0.5) <= 0.02


def test_fig1_stop_reaches_safe_stopped_state(scm):
    out = evolve(scm, VehicleState("medium"), FIG1_ENV, do("stop"))
    assert out.vehicle.speed == "stopped"
    assert hidden_danger(scm, out.vehicle, out.env) == SAFE
    assert evolve(scm, VehicleState("medium"), FIG1_ENV, do(None)) == "violation"


def test_compatible_state_withheld_action_is_safe(scm):
    green = {"traffic_light": "green", "lead_distance": "far", "weather": "clear"}
    assert evolve(scm, VehicleState("slow"), green, do(None)) == SAFE


def test_unknown_intervention_action(scm):
    with pytest.raises(DomainError):
        evolve(scm, VehicleState("slow"), FIG1_ENV, do("fly"))


# -- key factors: values derived by hand, confirmed by the flat-loop oracle ---

def test_fig1_key_factor_is_traffic_light(scm):
    # stop is chosen only under a red light: p(light) = (0, 0, 1) scores 1;
    # any other factor sees p = (1/3, 1/3) and scores (2/9) / (2/3) = 1/3
    expl = key_factors(scm, VehicleState("medium"), "stop")
    assert expl.top == "traffic_light"
    assert expl.scores == pytest.approx({"traffic_light": 1.0, "lead_distance": 1 / 3,
                                         "weather": 1 / 3}, abs=1e-15)
    assert expl.ranked[0][1] > expl.ranked[1][1]


def test_decelerate_from_fast_scores(scm):
    # p(light) = (3/4, 1, 0) -> 25/28; p(lead) = (1/2, 2/3) -> 25/42
    expl = key_factors(scm, VehicleState("fast"), "decelerate")
    assert expl.scores["traffic_light"] == pytest.approx(25 / 28, abs=1e-15)
    assert expl.scores["lead_distance"] == pytest.approx(25 / 42, abs=1e-15)
    assert expl.scores["weather"] == pytest.approx(25 / 42, abs=1e-15)


def test_single_factor_model_picks_its_factor():
    expl = key_factors(single_tie_scm(), VehicleState("medium"), "stop")
    assert expl.top == "obstacle"
    assert expl.scores["obstacle"] == pytest.approx(0.5, abs=1e-15)   # (1/4) / (1/2)


def test_determining_factor_outscores_irrelevant_one():
    def fw(u, v):
        return "collision" if v[0] == "on" and u.speed != "stopped" else SAFE

    def fy(u, v):
        return ("stop",) if fw(u, v) != SAFE else ("maintain",)

    def fxe(u, v, a):
        return u.replace(speed="stopped") if v[0] == "on" else u

    scm = build_dsdag([("a", ("off", "on")), ("b", ("x", "y", "z"))], fw, fy, fxe)
    expl = key_factors(scm, VehicleState("slow"), "stop")
    assert expl.scores["a"] > expl.scores["b"]
    assert expl.scores == oracle_key_factors(scm, VehicleState("slow"), "stop").scores


def test_inconsistent_observation(scm):
    with pytest.raises(InconsistentObservation):
        key_factors(scm, VehicleState("stopped"), "reverse")


def test_ties_break_by_declaration_order(scm):
    expl = key_factors(scm, VehicleState("medium"), "stop")
    assert [f for f, _ in expl.ranked] == ["traffic_light", "lead_distance", "weather"]


@given(st.lists(st.integers(2, 4), min_size=1, max_size=3), st.integers(0, 2 ** 32 - 1),
       st.integers(0, 23))
def test_key_factors_match_oracle(dims, seed, u_index):
    scm = random_scm(np.random.default_rng(seed), dims)
    u = VehicleState.from_index(u_index)
    for action in ACTIONS:
        try:
            fast = key_factors(scm, u, action)
        except InconsistentObservation:
            with pytest.raises(InconsistentObservation):
                oracle_key_factors(scm, u, action)
            continue
        slow = oracle_key_factors(scm, u, action)
        assert fast.ranked == slow.ranked


@given(st.integers(0, 2 ** 32 - 1))
def test_intervention_semantics_on_random_tables(seed):
    scm = random_scm(np.random.default_rng(seed), (2, 3))
    for u in VehicleState.all():
        for z in scm.environments():
            assert evolve(scm, u, z, do(None)) == hidden_danger(scm, u, z)
            for a in ACTIONS:
                end = evolve(scm, u, z, do(a))
                assert hidden_danger(scm, end.vehicle, end.env) == SAFE


def test_scores_do_not_depend_on_grid_permutation(scm):
    # the grid is enumerated exhaustively, so only its size matters
    a = key_factors(scm, VehicleState("fast"), "decelerate", grid=16)
    b = oracle_key_factors(scm, VehicleState("fast"), "decelerate", grid=16)
    assert a.ranked == b.ranked


def test_select_action_marginals_depend_only_on_admissible_set():
    tie = single_tie_scm()
    z = {"obstacle": "blocked"}
    for speed in ("slow", "fast"):
        rng = np.random.default_rng(3)
        picks = [select_action(tie, VehicleState(speed), z, rng) for _ in range(2000)]
        rng = np.random.default_rng(3)
        ref = [select_action(tie, VehicleState("medium"), z, rng) for _ in range(2000)]
        assert picks == ref


# -- kernels: compiled and fallback agree ----------------------------------

def test_kernel_backends_agree(scm):
    from drivecausal import _kernels_py
    try:
        from drivecausal import _kernels
    except ImportError:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(0)
    for n in range(1, 9):
        for r in range(n):
            assert _kernels.tie_hits(n, r, 16) == _kernels_py.tie_hits(n, r, 16)
    for u in VehicleState.all():
        fy_row = scm.fy[u.index]
        safe = rng.integers(0, 2, size=scm.n_env).astype(np.uint8)
        for a in range(len(ACTIONS)):
            np.testing.assert_array_equal(_kernels.fv_counts(fy_row, safe, scm.dims, a, 16),
                                          _kernels_py.fv_counts(fy_row, safe, scm.dims, a, 16))
    for a, b in [([1, 2, 3], [2, 3]), ([], [1]), ([4, 1, 4, 1], [1, 4, 1])]:
        assert _kernels.lcs_length(a, b) == _kernels_py.lcs_length(a, b)


@pytest.mark.parametrize("n", range(1, 6))
def test_tie_hits_partition_the_grid(n):
    hits = [kernels.tie_hits(n, r, 16) for r in range(n)]
    assert sum(hits) == 16
    assert max(hits) - min(hits) <= 1


# -- file format --------------------------------------------------------------

def test_file_round_trip(scm, tmp_path):
    path = tmp_path / "world.dsdag"
    fileformat.dump(scm, path)
    back = fileformat.load(path)
    assert back.factor_names == scm.factor_names
    for name in ("fw", "fy", "fxe"):
        np.testing.assert_array_equal(getattr(back, name), getattr(scm, name))


def test_hand_written_file_with_wildcards():
    text = """DSDAG/1
    # one switch that forces a stop
    factor gate: open closed
    edge X_s -> Y
    edge Z -> Y
    edge Z -> W
    edge X_s -> W
    edge Y -> X_e
    edge Z -> X_e
    fw speed=stopped -> safe
    fw gate=closed -> collision
    fw -> safe
    fy gate=closed speed=* -> stop
    fy -> maintain
    fxe gate=closed -> speed=stopped heading=. loading=.
    fxe -> speed=. heading=. loading=.
    """
    scm = fileformat.loads(text)
    assert key_factors(scm, VehicleState("slow"), "stop").top == "gate"


def test_file_errors_name_the_problem():
    with pytest.raises(FormatError, match="header"):
        fileformat.loads("DSDAG/2\n")
    with pytest.raises(IncompleteTableError):
        fileformat.loads("DSDAG/1\nfactor g: a b\n" + "".join(
            f"edge {a} -> {b}\n" for a, b in sorted(CANONICAL_EDGES)) + "fw -> safe\nfy -> maintain\n")
    with pytest.raises(FormatError, match="line 2"):
        fileformat.loads("DSDAG/1\nbogus line\n")


def test_traffic_scm_factor_count_bounds():
    with pytest.raises(ValueError):
        traffic_scm(0)
    assert len(traffic_scm(5).factors) == 5


def test_full_product_sweep_is_exhaustive(scm):
    # every (u, z) is visited exactly once by the environment enumeration
    seen = {(u.index, scm.env_index(z)) for u, z in itertools.product(VehicleState.all(),
                                                                       scm.environments())}
    assert len(seen) == 24 * scm.n_env
