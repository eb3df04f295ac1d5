import csv
import json
import struct
from dataclasses import replace

import jsonschema
import numpy as np
import pytest

from drivecausal.dsdag import VehicleState, key_factors
from drivecausal.harness.attribution import AttributionError, attribute, cause_over_spurious
from drivecausal.harness.checkpoint import (CheckpointError, MAGIC, load_checkpoint,
                                            save_checkpoint)
from drivecausal.harness.cli import main
from drivecausal.harness.config import Config, ConfigError, load_config, save_config
from drivecausal.harness.evaluate import evaluate, validate_report
from drivecausal.harness.experiments import SpuriousResult, spurious_config
from drivecausal.harness.explain import explain_scm, run_explain
from drivecausal.harness.simulate import (load_dataset, run_simulate, simulate, split_counts)
from drivecausal.harness.train import GATE_PARAMS, build_vocab, train
from drivecausal.simulator import ScenarioConfig, scripted_episode

TINY = Config(batch_size=8, epochs=2, channels=1, dim=8, layers=1, heads=2, attn_blocks=1,
              max_len=16, lr_decay_epoch=1,
              scenario=ScenarioConfig(frame_dims=(2, 64, 64), episodes=20))


@pytest.fixture(scope="module")
def data():
    return simulate(TINY)


@pytest.fixture(scope="module")
def trained(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return train(TINY, data["train"], data["val"], out_dir=out), out


# -- configuration --------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = replace(TINY, lam=0.2, seed=2 ** 64 - 1)
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg
    assert "lambda" in json.loads((tmp_path / "c.json").read_text())


@pytest.mark.parametrize("bad", [{"epochs": 0}, {"initial_lr": 0.0}, {"epsilon": 1.0},
                                 {"dim": 10, "heads": 4}, {"seed": -1}, {"gate_lr_scale": 0.0},
                                 {"clip_norm": -1.0}, {"lam": -0.1}])
def test_config_rejects_bad_values(bad):
    with pytest.raises(ConfigError):
        replace(Config(), **bad)


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigError):
        Config.from_dict({"epochz": 3})
    with pytest.raises(ConfigError):
        Config.from_dict({"scenario": {"frames": 3}})
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_step_decay():
    cfg = replace(Config(), initial_lr=0.5, lr_decay_epoch=3)
    assert [cfg.lr_at(e) for e in range(5)] == pytest.approx([0.5, 0.5, 0.5, 0.05, 0.05])
    assert replace(cfg, lr_decay_epoch=0).lr_at(100) == 0.5


def test_with_seed_reaches_the_simulator():
    cfg = Config().with_seed(9)
    assert cfg.seed == cfg.scenario.seed == 9


# -- dataset splits -----------------------------------------------------------------------

def test_split_of_one_hundred():
    assert split_counts(100) == (80, 10, 10)
    cfg = replace(TINY, scenario=replace(TINY.scenario, episodes=100, frame_dims=(2, 32, 64)))
    d = simulate(cfg)
    ids = {k: {ep.id for ep in d[k]} for k in ("train", "val", "test")}
    assert [len(ids[k]) for k in ("train", "val", "test")] == [80, 10, 10]
    assert not (ids["train"] & ids["val"] or ids["train"] & ids["test"] or ids["val"] & ids["test"])
    assert len(ids["train"] | ids["val"] | ids["test"]) == 100


def test_simulated_dataset_round_trips(tmp_path, data):
    run_simulate(TINY, tmp_path)
    back = load_dataset(tmp_path)
    for k in ("train", "val", "test"):
        assert [ep.id for ep in back[k]] == [ep.id for ep in data[k]]
        for a, b in zip(back[k], data[k]):
            np.testing.assert_array_equal(a.clip, b.clip)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert Config.from_dict(manifest["config"]) == TINY
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing")


def test_spurious_dataset_records_cooccurrence(tmp_path):
    cfg = replace(TINY, scenario=replace(TINY.scenario, spurious_rho=0.9, episodes=40))
    run_simulate(cfg, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["spurious"]["phi"] > 0.5


# -- training and checkpoints ----------------------------------------------------------------

def test_training_writes_loss_curve_and_checkpoint(trained):
    res, out = trained
    rows = list(csv.DictReader(open(out / "losses.csv")))
    assert [int(r["epoch"]) for r in rows] == [0, 1]
    assert [float(r["lr"]) for r in rows] == pytest.approx([TINY.initial_lr, TINY.initial_lr / 10])
    assert res.checkpoint == out / "best.ckpt" and res.checkpoint.exists()
    assert all(np.isfinite(h["l_total"]) for h in res.history)


def test_training_is_deterministic(data, trained):
    again = train(TINY, data["train"], data["val"])
    assert again.history == trained[0].history
    for (n, a), (_, b) in zip(again.model.parameters().items(),
                              trained[0].model.parameters().items()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=n)


def test_gate_gets_a_larger_step(data):
    cfg = replace(TINY, epochs=1)
    one = train(replace(cfg, gate_lr_scale=1.0), data["train"][:8])
    big = train(replace(cfg, gate_lr_scale=50.0), data["train"][:8])
    moved = {s: np.abs(r.model.parameters()["cam.W_H"].data).sum() for s, r in ((1, one), (50, big))}
    assert moved[50] > 10 * moved[1] > 0
    assert set(GATE_PARAMS) <= set(one.model.parameters())


def test_checkpoint_round_trip_is_bit_exact(trained, tmp_path):
    res, out = trained
    ck = load_checkpoint(res.checkpoint)
    assert ck.config == TINY and ck.vocab == res.vocab and ck.epoch == res.best_epoch
    save_checkpoint(tmp_path / "again.ckpt", ck.model, ck.config, ck.vocab, ck.epoch, ck.opt)
    assert (tmp_path / "again.ckpt").read_bytes() == res.checkpoint.read_bytes()


def test_checkpoint_errors(trained, tmp_path):
    raw = trained[0].checkpoint.read_bytes()
    cases = {"truncated": raw[:-9], "magic": b"XXXX" + raw[4:],
             "version": MAGIC + struct.pack("<I", 2) + raw[8:], "trailing": raw + b"\0"}
    for name, blob in cases.items():
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(tmp_path / name)
        if name == "version":
            assert "version 2" in str(exc.value)


def test_empty_training_set_rejected():
    with pytest.raises(ValueError):
        train(TINY, [])


# -- evaluation -----------------------------------------------------------------------------

def test_report_schema_and_determinism(trained, data, tmp_path):
    res, _ = trained
    splits = {"val": data["val"], "test": data["test"]}
    a = evaluate(res.model, res.vocab, TINY, splits, out_dir=tmp_path)
    b = evaluate(res.model, res.vocab, TINY, splits)
    assert a == b
    assert set(a["splits"]) == {"val", "test"}
    assert set(a["splits"]["test"]) == {"episodes", "narration", "reasoning"}
    assert json.loads((tmp_path / "report.json").read_text()) == a
    assert len((tmp_path / "generated_test.jsonl").read_text().splitlines()) == len(data["test"])
    broken = json.loads(json.dumps(a))
    del broken["splits"]["test"]["narration"]["bleu4"]
    with pytest.raises(jsonschema.ValidationError):
        validate_report(broken)


# -- explanation ------------------------------------------------------------------------------

FIG1_SCENE = ({"traffic_light": "yellow", "lead_distance": "far", "weather": "clear"},
              {"traffic_light": "red"})


def test_explain_red_light_stop(data):
    ep = scripted_episode(data.scm, TINY.scenario, 3, VehicleState("slow"), *FIG1_SCENE)
    expl = run_explain([ep], scm=data.scm)[0]
    assert expl.action == "stop"
    assert expl.scm.top == "traffic_light"
    assert expl.scm.scores == key_factors(data.scm, VehicleState("slow"), "stop").scores
    assert expl.attention is None


def test_explain_matches_key_factors_on_simulated_episodes(data):
    for ep in data["test"]:
        start, action, _ = ep.state_trace[-1]
        assert explain_scm(data.scm, ep) == key_factors(data.scm, start.vehicle, action)


def test_explain_with_network(trained, data):
    res, _ = trained
    rows = run_explain(data["test"], scm=data.scm, model=res.model, vocab=res.vocab)
    for r in rows:
        masses = [m for _, m in r.attention]
        assert masses == sorted(masses, reverse=True)
        assert r.source == "alpha"
        json.dumps(r.to_dict())
    with pytest.raises(ValueError):
        run_explain(data["test"])


def test_attribution_needs_a_planted_cue(trained, data):
    res, _ = trained
    attrs = attribute(res.model, data["test"], res.vocab, "decoder")
    assert all(a.source == "decoder" for a in attrs)
    with pytest.raises(AttributionError):
        cause_over_spurious(attrs, data["test"])


def test_spurious_result_verdict():
    assert SpuriousResult(0, 0.85, 0.6, 0.9).passed()
    assert not SpuriousResult(0, 0.85, 0.75, 0.9).passed()
    assert not SpuriousResult(0, 0.7, 0.0, 0.9).passed()
    cfg = spurious_config(4, epochs=10)
    assert cfg.seed == 4 and cfg.scenario.spurious_rho == 0.9 and cfg.lr_decay_epoch == 7


# -- command line ---------------------------------------------------------------------------------

def test_cli_end_to_end(tmp_path, capsys):
    save_config(TINY, tmp_path / "cfg.json")
    cfg = ["--config", str(tmp_path / "cfg.json")]
    assert main(["simulate", *cfg, "--out", str(tmp_path / "data")]) == 0
    assert main(["train", *cfg, "--data", str(tmp_path / "data"), "--out", str(tmp_path / "run")]) == 0
    ckpt = str(tmp_path / "run" / "best.ckpt")
    assert main(["eval", "--checkpoint", ckpt, "--data", str(tmp_path / "data"),
                 "--out", str(tmp_path / "eval")]) == 0
    validate_report(json.loads((tmp_path / "eval" / "report.json").read_text()))
    assert main(["explain", "--checkpoint", ckpt, "--data", str(tmp_path / "data"),
                 "--limit", "2", "--out", str(tmp_path / "explain")]) == 0
    assert len(json.loads((tmp_path / "explain" / "explanations.json").read_text())) == 2
    assert "B4=" in capsys.readouterr().out


def test_cli_errors_exit_two(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    (tmp_path / "bad.json").write_text('{"epochs": 0}')
    assert main(["train", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_cli_gradcheck(tmp_path):
    assert main(["gradcheck", "--seeds", "1", "--ops-only", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "gradcheck.json").read_text())
    assert rows and all(r["passed"] for r in rows)
