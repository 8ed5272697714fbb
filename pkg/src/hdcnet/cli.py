"""Command line interface.

Config precedence, lowest to highest: built-in defaults, --preset,
--config file, explicit flags.  Every run prints where its outputs
landed; exit code is nonzero on any failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, verify
from .data import dataset as ds
from .data import pnm


def _size(text: str):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size wants WxH (e.g. 64x48), got {text!r}")


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file, '#' comments")
    p.add_argument("--preset", choices=sorted(harness.PRESETS), help="named size/width preset")
    p.add_argument("--channels", type=int)
    p.add_argument("--size", type=_size, metavar="WxH")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps", type=int, help="hard cap on optimizer steps")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--lambda", type=float, dest="lam", help="surface-normal loss weight")
    p.add_argument("--seed", type=int)
    p.add_argument("--smfm", action=argparse.BooleanOptionalAction, default=None, dest="use_smfm")
    p.add_argument("--btmfm", action=argparse.BooleanOptionalAction, default=None, dest="use_btmfm")
    p.add_argument("--upsample", choices=("nearest", "bilinear"), dest="upsample_mode")
    p.add_argument("--synthetic", type=int, help="train on N generated samples")
    p.add_argument("--val-synthetic", type=int, default=0, dest="val_synthetic", metavar="N",
                   help="hold out N generated scenes for best-checkpoint selection")
    p.add_argument("--data", dest="data_root", help="dataset root with split manifests")
    p.add_argument("--out", dest="out_dir", help="output directory")


def build_config(args) -> harness.TrainConfig:
    kv = {}
    if args.preset:
        kv.update({k: str(v) for k, v in harness.PRESETS[args.preset].items()})
    if args.config:
        kv.update(harness.read_config_file(args.config))
    cfg = harness.config_from_kv(kv)
    overrides = {}
    for name in ("channels", "epochs", "steps", "batch_size", "lr", "weight_decay",
                 "lam", "seed", "use_smfm", "use_btmfm", "upsample_mode",
                 "synthetic", "data_root", "out_dir"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "size", None) is not None:
        overrides["width"], overrides["height"] = args.size
    from dataclasses import replace

    return replace(cfg, **overrides)


def cmd_train(args) -> int:
    cfg = build_config(args)
    val = None
    if args.val_synthetic:
        val = ds.synthetic_split(args.val_synthetic, base_seed=1000 * cfg.seed + 500,
                                 height=cfg.height, width=cfg.width)
    res = harness.train(cfg, val_samples=val)
    if res.diverged:
        print("training diverged; last good checkpoint kept", file=sys.stderr)
        return 1
    print(f"trained {res.steps_done} steps")
    print(f"log:   {Path(cfg.out_dir) / 'train_log.csv'}")
    print(f"final: {res.final_path}")
    if res.best_path:
        print(f"best:  {res.best_path}")
    return 0


def _eval_samples(args, cfg):
    if args.synthetic:
        return ds.synthetic_split(args.synthetic, base_seed=1000 * (args.seed or 0) + 500,
                                  height=cfg.height, width=cfg.width)
    if not args.data_root:
        raise ValueError("eval needs --data or --synthetic")
    _, samples = ds.load_split(args.data_root, args.split)
    return samples


def cmd_eval(args) -> int:
    model, cfg = harness.load_model(args.checkpoint)
    samples = _eval_samples(args, cfg)
    harness.check_resolution(cfg.height, cfg.width, samples, "eval")
    report, rows = harness.evaluate(model, samples, batch_size=cfg.batch_size,
                                    per_sample=args.per_sample)
    csv = harness.eval_csv(report, rows)
    print(csv, end="")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(csv)
        print(f"written: {args.out}", file=sys.stderr)
    if args.error_maps:
        d = Path(args.error_maps)
        d.mkdir(parents=True, exist_ok=True)
        preds = harness.predict(model, samples, cfg.batch_size)
        from .metrics import evaluation_mask

        for s, p in zip(samples, preds):
            pnm.write_error_map(d / f"{s.sample_id}_err.pgm", p.astype(np.float64),
                                s.gt.astype(np.float64), evaluation_mask(s.valid, s.transparent))
        print(f"error maps: {d}", file=sys.stderr)
    return 0


def cmd_ablate(args) -> int:
    cfg = build_config(args)
    rows = harness.run_ablation(cfg, n_train=args.train_samples, n_test=args.test_samples)
    csv = harness.ablation_csv(rows)
    print(csv, end="")
    out = Path(cfg.out_dir) / "ablation.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv)
    print(f"written: {out}", file=sys.stderr)
    return 0


def cmd_infer(args) -> int:
    out, err_map = harness.infer_files(
        args.checkpoint, args.rgb, args.raw, args.out,
        gt_path=args.gt, depth_scale=args.scale,
    )
    print(f"depth: {out}")
    if err_map:
        print(f"error map: {err_map}")
    return 0


def cmd_verify(args) -> int:
    return 0 if verify.run(verbose=True) else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    ap = argparse.ArgumentParser(prog="hdcnet", description="depth completion for transparent objects")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--data", dest="data_root")
    p.add_argument("--split", default="test")
    p.add_argument("--synthetic", type=int, help="evaluate on N generated samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-sample", action="store_true")
    p.add_argument("--out", help="write the CSV here as well")
    p.add_argument("--error-maps", help="directory for per-sample error PGMs")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate the module-switch grid")
    _add_train_flags(p)
    p.add_argument("--train-samples", type=int, default=64)
    p.add_argument("--test-samples", type=int, default=16)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("infer", help="complete one depth map")
    p.add_argument("checkpoint")
    p.add_argument("--rgb", required=True)
    p.add_argument("--raw", required=True)
    p.add_argument("--gt")
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=ds.DEFAULT_DEPTH_SCALE)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("verify", help="run the self-check suite")
    p.set_defaults(fn=cmd_verify)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
