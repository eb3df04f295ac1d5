"""Command line entry point: ``drivecausal {simulate,train,eval,explain,gradcheck}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import Config, ConfigError, load_config, save_config
from .evaluate import evaluate
from .explain import run_explain
from .gradchecks import run_gradchecks
from .simulate import load_dataset, run_simulate, simulate
from .train import train

log = logging.getLogger("drivecausal")


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _dataset(args, cfg: Config):
    return load_dataset(args.data) if args.data else simulate(cfg)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    cfg = _config(args)
    data = run_simulate(cfg, args.out)
    print(" ".join(f"{k}={len(v)}" for k, v in data.splits.items()), f"-> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    data = _dataset(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    res = train(cfg, data["train"], data["val"], out_dir=out)
    last = res.history[-1]
    print(f"trained {cfg.epochs} epochs; final l_total={last['l_total']:.4f}, "
          f"best epoch {res.best_epoch} -> {res.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    data = _dataset(args, cfg)
    splits = {name: data[name] for name in args.splits}
    rep = evaluate(ckpt.model, ckpt.vocab, cfg, splits, out_dir=args.out)
    for name, table in rep["splits"].items():
        for part in ("narration", "reasoning"):
            t = table[part]
            print(f"{name:5s} {part:9s} B4={t['bleu4']:.3f} R={t['rouge_l']:.3f} "
                  f"C={t['cider']:.3f} M={t['meteor_lite']:.3f}")
    return 0


def cmd_explain(args) -> int:
    model = vocab = None
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        model, vocab, cfg = ckpt.model, ckpt.vocab, ckpt.config
    else:
        cfg = _config(args)
    data = _dataset(args, cfg)
    episodes = data[args.split][:args.limit]
    result = run_explain(episodes, scm=data.scm, model=model, vocab=vocab, source=args.source)
    rows = [r.to_dict() for r in result]
    _write_json(Path(args.out) / "explanations.json", rows)
    for r in result:
        scm_top = r.scm.top if r.scm else "-"
        net_top = r.attention[0][0] if r.attention else "-"
        print(f"{r.episode_id} {r.action:10s} cause={','.join(r.causal_label):15s} "
              f"scm_top={scm_top:15s} attention_top={net_top}")
    return 0


def cmd_gradcheck(args) -> int:
    base = args.seed or 0
    results = run_gradchecks(range(base, base + args.seeds), ops_only=args.ops_only)
    failed = [r for r in results if not r.passed]
    rows = [{"check": r.name, "seed": r.seed, "max_rel_error": r.report.max_error,
             "passed": r.passed} for r in results]
    if args.out:
        _write_json(Path(args.out) / "gradcheck.json", rows)
    worst = max(results, key=lambda r: r.report.max_error)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed; worst {worst.name} "
          f"(seed {worst.seed}) rel err {worst.report.max_error:.2e}")
    for r in failed:
        print(f"FAIL {r.name} seed {r.seed}: {r.report}")
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drivecausal", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON config file (defaults when omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
        sp.add_argument("--out", required=out_required, help="output directory")
        return sp

    common(sub.add_parser("simulate", help="generate train/val/test episodes"))
    sp = common(sub.add_parser("train", help="train a captioner"))
    sp.add_argument("--data", help="dataset directory from `simulate` (else simulate in memory)")
    sp = common(sub.add_parser("eval", help="score generated captions"))
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", help="dataset directory (else re-simulate from the checkpoint config)")
    sp.add_argument("--splits", nargs="+", default=["test"], choices=["train", "val", "test"])
    sp = common(sub.add_parser("explain", help="key factors and attention attribution"))
    sp.add_argument("--checkpoint", help="trained model for the attention path")
    sp.add_argument("--data", help="dataset directory")
    sp.add_argument("--split", default="test", choices=["train", "val", "test"])
    sp.add_argument("--limit", type=int, default=20)
    sp.add_argument("--source", choices=["alpha", "decoder"])
    sp = common(sub.add_parser("gradcheck", help="finite-difference gradient checks"),
                out_required=False)
    sp.add_argument("--seeds", type=int, default=3, help="number of seeds, starting at --seed")
    sp.add_argument("--ops-only", action="store_true", help="skip the composed model loss")
    return p


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "eval": cmd_eval,
            "explain": cmd_explain, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"drivecausal {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
