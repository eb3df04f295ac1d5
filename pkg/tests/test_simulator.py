import json
import math
import warnings
from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chi2, chi2_contingency

from drivecausal.dsdag import VehicleState, traffic_scm
from drivecausal.simulator import (AnnotationError, DatasetFormatError, Episode, Layout,
                                   RenderError, ScenarioConfig, SimulatorError, caption_text,
                                   check_dims, cooccurrence, dataset_io, episode_seed,
                                   generate_episode, ingest_annotations, inject_spurious,
                                   read_episodes, render_clip, replay, scripted_episode,
                                   split_caption, synth_signals, template_caption, vocabulary,
                                   write_episodes)
from drivecausal.simulator.dataset_io import HEADER_BYTES, paths
from drivecausal.simulator.render import BLOCK, CUE_OFF, CUE_ON, WINDOW

SCM = traffic_scm(3)
SMALL = ScenarioConfig(frame_dims=(4, 64, 64), noise_sigma=0.0)


def fig1(cfg=SMALL, seed=7):
    return scripted_episode(SCM, cfg, seed, VehicleState("slow"),
                            {"traffic_light": "yellow", "lead_distance": "far", "weather": "clear"},
                            {"traffic_light": "red"})


def batch(n, cfg=SMALL, base=0):
    return [generate_episode(SCM, cfg, episode_seed(base, i)) for i in range(n)]


def test_fig1_caption():
    ep = fig1()
    assert ep.action == "stop"
    assert ep.narration == "the car stops"
    assert ep.reasoning == "because the traffic light turns red"
    assert ep.causal_label == ("traffic_light",)


def test_single_factor_world_labels_that_factor():
    scm = traffic_scm(1)
    for ep in [generate_episode(scm, SMALL, s) for s in range(10)]:
        assert ep.causal_label == ("traffic_light",)


def test_same_seed_same_episode():
    a = generate_episode(SCM, ScenarioConfig(), 123)
    b = generate_episode(SCM, ScenarioConfig(), 123)
    assert a == b
    assert a.clip.tobytes() == b.clip.tobytes()
    assert a != generate_episode(SCM, ScenarioConfig(), 124)


def test_episode_invariants():
    for ep in batch(50):
        assert not set(ep.causal_label) & set(ep.spurious_labels)
        assert ep.narration and ep.reasoning
        f, h, w, c = ep.clip.shape
        assert f % 2 == 0 and h % 32 == 0 and w % 32 == 0 and c == 3
        assert ep.clip.min() >= 0.0 and ep.clip.max() <= 1.0
        assert ep.start.env.assignments[ep.causal_label[0]] != \
            ep.end.env.assignments[ep.causal_label[0]]


def test_replay_reproduces_actions():
    for ep in batch(100):
        for (action, end), (_, a, e) in zip(replay(SCM, ep), ep.state_trace):
            assert action == a and end == e


def test_signals_follow_speed_bins():
    sig = synth_signals(VehicleState("fast"), VehicleState("stopped"), 6)
    assert sig["speed"] == pytest.approx([16.0, 16.0, 12.0, 8.0, 4.0, 0.0])
    assert sig["course"] == [0.0] * 6


def test_unsafe_scripted_start_rejected():
    with pytest.raises(SimulatorError):
        scripted_episode(SCM, SMALL, 0, VehicleState("fast"),
                         {"traffic_light": "red", "lead_distance": "far", "weather": "clear"},
                         {"weather": "rain"})


def test_config_validation():
    with pytest.raises(SimulatorError):
        ScenarioConfig(spurious_rho=1.0)
    with pytest.raises(SimulatorError):
        ScenarioConfig(num_factors=0)
    with pytest.raises(RenderError):
        ScenarioConfig(frame_dims=(3, 64, 64))
    with pytest.raises(RenderError):
        ScenarioConfig(frame_dims=(4, 48, 64))


# -- rendering ----------------------------------------------------------------

def test_zero_noise_render_is_reproducible():
    ep = fig1()
    np.testing.assert_array_equal(render_clip(ep, SMALL), render_clip(ep, SMALL))
    np.testing.assert_array_equal(render_clip(ep, SMALL), ep.clip)


def test_factor_change_touches_exactly_one_block():
    ep = fig1()
    layout = ep.layout()
    diff = np.abs(ep.clip[-1] - ep.clip[0]).max(axis=-1) > 0
    ego = layout.window_origin(layout.ego_window)
    diff[ego[0]:ego[0] + WINDOW, ego[1]:ego[1] + WINDOW] = False   # ego motion lives there
    ys, xs = layout.regions["traffic_light"].slices
    expect = np.zeros_like(diff)
    expect[ys, xs] = True
    np.testing.assert_array_equal(diff, expect)


def test_noise_statistics():
    cfg = ScenarioConfig(frame_dims=(4, 64, 64), noise_sigma=0.1)
    ep = fig1(cfg)
    clean = render_clip(ep, SMALL)
    dev = ep.clip.astype(np.float64) - clean
    # stay away from the clipping bounds: keep pixels whose clean value is mid-range
    keep = (clean > 0.3) & (clean < 0.7)
    assert abs(dev[keep].mean()) < 0.005
    assert abs(dev[keep].std() - 0.1) < 0.005


def test_layout_blocks_are_disjoint_and_cue_precedes_ego():
    layout = Layout(["traffic_light", "lead_distance", "weather"], ["brake_light"], 64, 64)
    cells = {}
    for name, r in layout.regions.items():
        ys, xs = r.slices
        for y in range(ys.start, ys.stop):
            for x in range(xs.start, xs.stop):
                assert (y, x) not in cells, f"{name} overlaps {cells.get((y, x))}"
                cells[(y, x)] = name
        assert r.size == BLOCK
    assert layout.window_of("brake_light") == layout.ego_window - 1
    assert layout.ego_window == 3


def test_layout_too_small():
    with pytest.raises(RenderError):
        Layout(["a", "b"], ["c"], 32, 64)
    with pytest.raises(RenderError):
        check_dims((4, 64, 40))


# -- captions -----------------------------------------------------------------

def test_template_examples():
    ep = fig1()
    assert template_caption(ep.state_trace, ep.causal_label) == \
        ("the car stops", "because the traffic light turns red")
    start, _, end = ep.state_trace[0]
    assert template_caption(((start, "maintain", end),), ()) == \
        ("the car drives forward", "because the road is clear")
    with pytest.raises(ValueError):
        template_caption(((start, "teleport", end),), ())
    with pytest.raises(ValueError):
        template_caption((), ())


def test_vocabulary_is_closed_and_small():
    vocab = vocabulary()
    assert len(vocab) <= 200
    for ep in batch(100):
        assert set(caption_text(ep.narration, ep.reasoning).split()) <= vocab


@given(st.sampled_from(["the car stops", "the car slows down"]),
       st.sampled_from(["because the road is wet", "because the car ahead is close"]))
def test_split_caption_inverts_caption_text(n, r):
    assert split_caption(caption_text(n, r)) == (n, r)


# -- planted cues ---------------------------------------------------------------

@pytest.fixture(scope="module")
def many():
    return batch(10_000, ScenarioConfig(frame_dims=(2, 64, 64), noise_sigma=0.0), base=5)


def plant(episodes, rho, seed=0):
    rate = float(np.mean([ep.action == "stop" for ep in episodes]))
    rng = np.random.default_rng(seed)
    return [inject_spurious(ep, "brake_light", rho, rng, base_rate=rate) for ep in episodes]


def test_cooccurrence_matches_rho(many):
    planted = plant(many[:1000], 0.9)
    assert abs(cooccurrence(planted, "brake_light", "stop")["phi"] - 0.9) <= 0.05
    assert all("brake_light" in ep.spurious_labels for ep in planted)


def test_rho_zero_gives_base_rate(many):
    planted = plant(many[:2000], 0.0)
    c = cooccurrence(planted, "brake_light", "stop")
    assert abs(c["phi"]) < 0.06
    assert abs(c["p_on_given_action"] - c["p_on_given_other"]) < 0.06


def stratified_chi2(episodes, key):
    """Sum of per-stratum chi-square statistics for cue x action tables."""
    strata = defaultdict(Counter)
    for ep in episodes:
        strata[key(ep)][(ep.spurious["brake_light"], ep.action)] += 1
    stat, dof = 0.0, 0
    for counts in strata.values():
        cues = sorted({c for c, _ in counts})
        acts = sorted({a for _, a in counts})
        if len(cues) < 2 or len(acts) < 2:
            continue
        table = [[counts[(c, a)] for a in acts] for c in cues]
        s, _, d, _ = chi2_contingency(table, correction=False)
        stat, dof = stat + s, dof + d
    return stat, dof


def test_cue_independent_of_action_given_cause(many):
    planted = plant(many, 0.9)
    stat, dof = stratified_chi2(
        planted, lambda ep: (ep.start.vehicle, ep.causal_label,
                             tuple(ep.end.env.assignments[f] for f in ep.causal_label)))
    # the action is a function of the stratum here, so no table has two actions
    assert dof == 0 or chi2.sf(stat, dof) > 0.01
    # negative control: without conditioning on the cause the cue is strongly dependent
    stat, dof = stratified_chi2(planted, lambda ep: ())
    assert dof > 0 and chi2.sf(stat, dof) < 1e-6


def test_cue_has_no_causal_effect(many):
    for ep in plant(many[:200], 0.9):
        assert [a for a, _ in replay(SCM, ep)] == [a for _, a, _ in ep.state_trace]


def test_inject_rejects_true_cause_and_modelled_factors():
    ep = fig1()
    rng = np.random.default_rng(0)
    with pytest.raises(SimulatorError):
        inject_spurious(ep, "traffic_light", 0.9, rng)
    with pytest.raises(SimulatorError):
        inject_spurious(ep, "weather", 0.9, rng)


def test_cue_renders_in_its_block():
    ep = fig1()
    on = inject_spurious(ep, "brake_light", 0.999999, np.random.default_rng(0), base_rate=0.0)
    assert on.spurious["brake_light"] == "on"
    ys, xs = on.layout().regions["brake_light"].slices
    assert on.clip[-1, ys, xs].mean() == pytest.approx(CUE_ON, abs=1e-6)
    assert on.clip[0, ys, xs].mean() == pytest.approx(CUE_OFF, abs=1e-6)
    off = inject_spurious(ep, "brake_light", 0.0, np.random.default_rng(0), base_rate=0.0)
    assert off.spurious["brake_light"] == "off"
    assert off.clip[:, ys, xs].mean() == pytest.approx(CUE_OFF, abs=1e-6)


# -- storage --------------------------------------------------------------------

def test_round_trip(tmp_path):
    eps = plant(batch(10), 0.5)
    dataset_io(eps, tmp_path / "d", "write")
    back = dataset_io(None, tmp_path / "d", "read")
    assert back == eps
    for a, b in zip(eps, back):
        assert a.signals == b.signals and a.seed == b.seed and a.spurious == b.spurious


def test_sidecar_size_arithmetic(tmp_path):
    eps = batch(3, ScenarioConfig(frame_dims=(8, 64, 64)))
    _, sidecar = write_episodes(eps, tmp_path / "d")
    assert sidecar.stat().st_size == HEADER_BYTES + 3 * 8 * 64 * 64 * 3 * 4
    # the same arithmetic at 1000 episodes
    assert HEADER_BYTES + 1000 * 8 * 64 * 64 * 3 * 4 == 24 + 393_216_000


def test_corrupted_magic_and_truncation(tmp_path):
    eps = batch(2)
    _, sidecar = write_episodes(eps, tmp_path / "d")
    raw = bytearray(sidecar.read_bytes())
    sidecar.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(DatasetFormatError, match="magic"):
        read_episodes(tmp_path / "d")
    sidecar.write_bytes(bytes(raw[:-8]))
    with pytest.raises(DatasetFormatError, match="bytes"):
        read_episodes(tmp_path / "d")
    raw[4] = 2
    sidecar.write_bytes(bytes(raw))
    with pytest.raises(DatasetFormatError, match="version"):
        read_episodes(tmp_path / "d")


def test_write_rejects_mixed_shapes(tmp_path):
    a = batch(1)[0]
    b = generate_episode(SCM, ScenarioConfig(frame_dims=(2, 64, 64)), 1)
    with pytest.raises(DatasetFormatError):
        write_episodes([a, b], tmp_path / "d")


def test_index_lines_carry_clip_index(tmp_path):
    index, _ = write_episodes(batch(3), tmp_path / "d")
    recs = [json.loads(ln) for ln in index.read_text().splitlines()]
    assert [r["clip_index"] for r in recs] == [0, 1, 2]
    assert paths(tmp_path / "d")[0] == index


# -- annotation ingestion ---------------------------------------------------------

def _ann(**kw):
    rec = {"video_id": "v1", "start_s": 0.0, "end_s": 3.0, "action": "The car stops",
           "justification": "the light is red", "speed": [5, 3, 1], "course": [0, 0, 0]}
    rec.update(kw)
    return rec


def test_ingest_valid_file(tmp_path):
    path = tmp_path / "a.jsonl"
    path.write_text("\n".join(json.dumps(_ann(video_id=f"v{i}")) for i in range(3)) + "\n")
    recs = ingest_annotations(path)
    assert len(recs) == 3
    assert recs[0].narration == "the car stops"
    assert recs[0].reasoning == "because the light is red"


def test_ingest_missing_field_names_field_and_line(tmp_path):
    bad = _ann()
    del bad["justification"]
    path = tmp_path / "a.jsonl"
    path.write_text(json.dumps(_ann()) + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(AnnotationError, match=r"a\.jsonl:2.*justification"):
        ingest_annotations(path)


def test_ingest_malformed_json_line(tmp_path):
    path = tmp_path / "a.jsonl"
    path.write_text(json.dumps(_ann()) + "\n{not json\n")
    with pytest.raises(AnnotationError, match=":2"):
        ingest_annotations(path)


def test_ingest_length_mismatch_warns_and_keeps(tmp_path):
    path = tmp_path / "a.jsonl"
    path.write_text(json.dumps(_ann(speed=[1.0] * 7)) + "\n")
    with pytest.warns(UserWarning, match="speed"):
        recs = ingest_annotations(path)
    assert len(recs) == 1 and len(recs[0].speed) == 7
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        path.write_text(json.dumps(_ann(end_s=2.5, speed=[1, 2, 3, 4], course=[0, 0, 0])) + "\n")
        assert len(ingest_annotations(path)) == 1
    assert math.ceil(2.5) == 3


def test_episode_requires_disjoint_labels():
    ep = fig1()
    with pytest.raises(SimulatorError):
        Episode(ep.id, ep.state_trace, ep.signals, ep.narration, ep.reasoning,
                ("traffic_light",), ("traffic_light",), None, 0)
