"""Command-line entry point: ``adaptmask <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .config import METHODS, load_config, parse_value, to_flat
from .data import IngestionError, make_synthetic_dataset, save_synthetic


def _synth_data(args):
    ds = make_synthetic_dataset(args.count, args.val_count, args.seed, args.occlusion_frac,
                                args.low_contrast_frac, (args.size, args.size))
    out = save_synthetic(args.out, ds, {"seed": args.seed, "occlusion_frac": args.occlusion_frac,
                                        "low_contrast_frac": args.low_contrast_frac})
    print(json.dumps({"out": str(out), "train": len(ds["train"]), "val": len(ds["val"])}))


def _train(args):
    from .train import fit

    overrides = {}
    if args.method:
        overrides["train.method"] = args.method
    if args.labels is not None:
        overrides["data.labels"] = args.labels
    if args.epochs is not None:
        overrides["train.epochs"] = args.epochs
    if args.seed is not None:
        overrides["train.seed"] = args.seed
    if args.data:
        overrides.update({"data.source": "synthetic-dir", "data.dir": args.data})
    for item in args.set or []:
        key, _, value = item.partition("=")
        overrides[key.strip()] = parse_value(value)
    cfg = load_config(args.config, overrides)
    flat = to_flat(cfg)
    out = args.out or f"runs/{cfg.method.replace('+', '-')}-l{cfg.data.labels}-s{cfg.seed}"
    run_dir = fit(cfg, out, resume=args.resume)
    print(json.dumps({"run_dir": str(run_dir), "method": flat["train.method"]}))


def _eval(args):
    from .train import evaluate

    res = evaluate(args.ckpt, args.data, args.protocol)
    print(json.dumps(res, sort_keys=True))


def _allocate(args):
    from .train import allocate_masks

    for row in allocate_masks(args.ckpt, args.data):
        print(json.dumps(row))


def _plot(args):
    from .plots import emit_plots

    out = args.out or str(Path(args.runs[0]) / "plots")
    for path in emit_plots(args.runs, out):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptmask",
                                description="Semi-supervised pose estimation with adaptive keypoint masking.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="render a synthetic stick-figure dataset")
    s.add_argument("--count", type=int, required=True, help="training samples")
    s.add_argument("--val-count", type=int, default=200)
    s.add_argument("--occlusion-frac", type=float, default=0.15)
    s.add_argument("--low-contrast-frac", type=float, default=0.15)
    s.add_argument("--size", type=int, default=64, help="square image side in pixels")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_synth_data)

    t = sub.add_parser("train", help="train one run")
    t.add_argument("--config", required=True)
    t.add_argument("--method", choices=METHODS)
    t.add_argument("--labels", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--data", help="dataset directory written by synth-data")
    t.add_argument("--out", help="run directory (default runs/<method>-l<labels>-s<seed>)")
    t.add_argument("--resume", action="store_true", help="continue from <out>/ckpt-last")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="score a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--protocol", choices=("oks", "pck"), default="pck")
    e.set_defaults(func=_eval)

    a = sub.add_parser("allocate-masks", help="print per-sample mask budgets as JSON lines")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--data", required=True)
    a.set_defaults(func=_allocate)

    pl = sub.add_parser("plot", help="loss, AP and mask-count charts")
    pl.add_argument("--runs", nargs="+", required=True)
    pl.add_argument("--out", help="output directory (default <first run>/plots)")
    pl.set_defaults(func=_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (IngestionError, CheckpointError, ValueError, KeyError, FileNotFoundError) as err:
        print(f"adaptmask: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
