"""Command-line entry point.

Subcommands: stats, train, eval, tsne, augment-preview, geo-embed, validate,
make-toy. Exit codes: 0 on success, 1 on usage/configuration errors, 2 on
data or runtime errors. Train settings come from defaults, then an optional
``--config`` key=value file, then repeated ``--set key=value`` overrides,
then dedicated flags (highest precedence).
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from .augment import apply_policy, policy_preset
from .data import (CLASSES, SPLITS, channel_stats, load_image, normalize,
                   resize, save_image, save_stats, scan, stats_to_text,
                   validate_splits)
from .errors import (ConfigError, ContractError, DataError, FormatError,
                     IterationError, NumericError)
from .geo import GeoCoordinate, GeoNormalizer, embed_geo_bars, fit_normalizer, normalize_coord
from .metrics import report_to_text
from .rng import sample_rng
from .toydata import VARIANTS, make_toy
from .train import (AUGMENT_PRESETS, GEO_MODES, MODELS, OPTIMIZERS, TrainConfig,
                    config_from_pairs, config_from_text, evaluate, train)
from .tsne import TsneConfig, run_tsne

REAL_TOTALS = (1615, 473, 668)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage problems; this maps them to exit 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _split_pair(text: str) -> tuple:
    if "=" not in text:
        raise _UsageError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _build_parser() -> _Parser:
    parser = _Parser(prog="forestvit",
                     description="Train and inspect the deforestation-driver "
                                 "classifier toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="channel statistics of the train split")
    p.add_argument("--root", required=True)
    p.add_argument("--out", help="write stats here instead of stdout")

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config field (repeatable)")
    p.add_argument("--root")
    p.add_argument("--out")
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--augment", choices=AUGMENT_PRESETS)
    p.add_argument("--geo-mode", choices=GEO_MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded bitwise-reproducible run (always on; "
                        "the flag documents intent)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--root", help="override the dataset root in the checkpoint")
    p.add_argument("--out", help="directory for report files")

    p = sub.add_parser("tsne", help="2-D embedding of a split's images")
    p.add_argument("--root", required=True)
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--perplexity", type=float, default=10.0)
    p.add_argument("--eta", type=float, default=100.0)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-n", type=int, default=0,
                   help="cap the number of points (0 = all)")

    p = sub.add_parser("augment-preview", help="write augmented variants")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preset", default="augmented", choices=AUGMENT_PRESETS)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("geo-embed", help="paint coordinate bars into an image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--bar-px", type=int, default=0, help="0 = size // 14")
    p.add_argument("--bounds", type=float, nargs=4,
                   metavar=("LAT_MIN", "LAT_MAX", "LON_MIN", "LON_MAX"))
    p.add_argument("--root", help="fit bounds from this dataset's train split")

    p = sub.add_parser("validate", help="report per-split image counts")
    p.add_argument("--root", required=True)
    p.add_argument("--expect-real", action="store_true",
                   help=f"assert the full-dataset totals {REAL_TOTALS}")

    p = sub.add_parser("make-toy", help="generate the synthetic fixture set")
    p.add_argument("--root", required=True)
    p.add_argument("--variant", default="fixed", choices=VARIANTS)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _train_config(args) -> TrainConfig:
    # every failure here is a usage problem, not a runtime one
    try:
        config = TrainConfig()
        if args.config:
            with open(args.config, "r", encoding="utf-8") as fh:
                config = config_from_text(fh.read(), config)
        overrides: Dict[str, str] = dict(_split_pair(item) for item in args.set)
        flags = {"root": args.root, "out": args.out, "model": args.model,
                 "epochs": args.epochs, "batch_size": args.batch_size,
                 "learning_rate": args.learning_rate, "optimizer": args.optimizer,
                 "augment": args.augment, "geo_mode": args.geo_mode,
                 "seed": args.seed}
        for key, value in flags.items():
            if value is not None:
                overrides[key] = str(value)
        return config_from_pairs(overrides, config)
    except (FormatError, OSError) as exc:
        raise _UsageError(str(exc)) from exc


def _cmd_stats(args) -> int:
    stats = channel_stats(scan(args.root), "train")
    if args.out:
        save_stats(args.out, stats)
    print(stats_to_text(stats), end="")
    return 0


def _cmd_train(args) -> int:
    result = train(_train_config(args))
    print(f"best_epoch={result.best_epoch}")
    print(f"checkpoint={result.checkpoint_path}")
    print(f"history={result.history_path}")
    if result.history.size:
        last = result.history[-1]
        print(f"final: train_loss={last[1]:.6f} val_loss={last[2]:.6f} "
              f"val_acc={last[3]:.4f}")
    return 0


def _cmd_eval(args) -> int:
    report, _, _ = evaluate(args.checkpoint, args.split, root=args.root,
                            out_dir=args.out)
    print(report_to_text(report), end="")
    return 0


def _cmd_tsne(args) -> int:
    manifest = scan(args.root)
    records = manifest.split_records(args.split)
    if args.max_n and len(records) > args.max_n:
        records = records[:args.max_n]
    if not records:
        raise DataError(f"split {args.split!r} has no records")
    stats = channel_stats(manifest, "train")
    size = min(load_image(records[0].path).shape[:2])
    points = np.stack([normalize(resize(load_image(r.path), size), stats).reshape(-1)
                       for r in records])
    config = TsneConfig(perplexity=args.perplexity, eta=args.eta,
                        max_iters=args.iters, seed=args.seed)
    y, trace = run_tsne(points, config)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("index,y1,y2,label\n")
        for i, (row, record) in enumerate(zip(y, records)):
            fh.write(f"{i},{row[0]:.17g},{row[1]:.17g},{record.label}\n")
    with open(args.out + ".meta", "w", encoding="utf-8") as fh:
        fh.write(f"n={len(records)}\nperplexity={args.perplexity:.17g}\n"
                 f"eta={args.eta:.17g}\niters={args.iters}\nseed={args.seed}\n"
                 f"initial_kl={trace[0]:.17g}\nfinal_kl={trace[-1]:.17g}\n")
    print(f"wrote {args.out} ({len(records)} points, "
          f"kl {trace[0]:.4f} -> {trace[-1]:.4f})")
    return 0


def _cmd_augment_preview(args) -> int:
    image = load_image(args.image)
    policy = policy_preset(args.preset)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.n):
        out = apply_policy(image, policy, sample_rng(args.seed, i))
        save_image(os.path.join(args.out, f"variant_{i:03d}.png"), out)
    print(f"wrote {args.n} variants to {args.out}")
    return 0


def _cmd_geo_embed(args) -> int:
    image = load_image(args.image)
    if args.bounds:
        normalizer = GeoNormalizer(*args.bounds)
    elif args.root:
        records = scan(args.root).split_records("train")
        coords = [r.coord for r in records if r.coord is not None]
        normalizer = fit_normalizer(coords)
    else:
        raise _UsageError("geo-embed needs either --bounds or --root")
    uv = normalize_coord(GeoCoordinate(args.lat, args.lon), normalizer)
    bar_px = args.bar_px if args.bar_px > 0 else max(1, min(image.shape[:2]) // 14)
    save_image(args.out, embed_geo_bars(image, uv, bar_px))
    print(f"wrote {args.out} (u={uv[0]:.4f}, v={uv[1]:.4f}, bar_px={bar_px})")
    return 0


def _cmd_validate(args) -> int:
    expected = REAL_TOTALS if args.expect_real else None
    report = validate_splits(scan(args.root), expected_totals=expected)
    for split in SPLITS:
        per_class = report["per_split"][split]
        detail = ", ".join(f"{c}={per_class[c]}" for c in CLASSES)
        print(f"{split}: total={report['totals'][split]} ({detail})")
    print(f"total={report['total']}")
    return 0


def _cmd_make_toy(args) -> int:
    totals = make_toy(args.root, args.variant, args.seed)
    joined = ", ".join(f"{s}={totals[s]}" for s in SPLITS)
    print(f"wrote toy dataset ({args.variant}) to {args.root}: {joined}")
    return 0


_COMMANDS = {
    "stats": _cmd_stats,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "tsne": _cmd_tsne,
    "augment-preview": _cmd_augment_preview,
    "geo-embed": _cmd_geo_embed,
    "validate": _cmd_validate,
    "make-toy": _cmd_make_toy,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        code = exc.code
        return code if isinstance(code, int) else (0 if code is None else 1)
    try:
        return _COMMANDS[args.command](args)
    except (_UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ContractError, IterationError, NumericError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
