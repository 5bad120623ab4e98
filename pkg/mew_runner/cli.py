"""
Command-line entry point: ``mew-unet <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error (missing or
corrupt dataset/checkpoint), 4 numerical failure (non-finite loss).
"""

import argparse
import sys
from typing import List, Optional, Tuple

from mew_unet.errors import ConfigError, DataError, NumericalError, ShapeError
from mew_unet.mew import BranchMask

from .commands import ablate, analyze_freq, evaluate, gen_data, train
from .config_loader import Config, get_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _corner(text: str) -> Tuple[int, int]:
    try:
        top, left = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected TOP,LEFT, got {text!r}") from None
    return top, left


def _mask(text: str) -> str:
    try:
        return BranchMask.from_string(text).to_string()
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mew-unet",
        description="Multi-axis external weights U-Net: data, training and analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="YAML/JSON config (default: config.yaml)")
        p.add_argument("--out", default=None, help="Output directory")
        p.add_argument("--seed", type=int, default=None, help="Seed override")
        p.add_argument("--quiet", action="store_true", help="Suppress progress output")

    p = sub.add_parser("gen-data", help="Generate the synthetic texture dataset")
    common(p)

    p = sub.add_parser("train", help="Train a model")
    common(p)
    p.add_argument("--data", default=None, help="Dataset root with train/ and test/")
    p.add_argument("--mask", type=_mask, default=None, help="Active branches, e.g. dw,hw,cw,ch")
    p.add_argument("--generator", choices=["generated", "raw"], default=None)
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default="test", choices=["train", "test"])

    p = sub.add_parser("ablate", help="Run the branch ablation grid")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--seeds", type=int, default=None,
                   help="Number of consecutive seeds starting at --seed (default: config)")
    p.add_argument("--parallel", action="store_true", default=None,
                   help="Run jobs in a process pool")
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("analyze-freq", help="Frequency signal strength curves of patches")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--sample", type=int, default=0, help="Sample index for --patch")
    p.add_argument("--patch", type=_corner, action="append", default=None,
                   help="Patch corner TOP,LEFT (repeatable); default: search per region")
    return parser


def _resolve_config(args: argparse.Namespace) -> Config:
    config = get_config(args.config)
    overrides = {
        "debug.verbose": False if args.quiet else None,
        "model.branch_mask": getattr(args, "mask", None),
        "model.generator_mode": getattr(args, "generator", None),
        "train.epochs": getattr(args, "epochs", None),
    }
    if args.seed is not None:
        overrides["train.seed"] = args.seed
        if args.command == "gen-data":
            overrides["data.seed"] = args.seed
    if args.command == "ablate" and args.epochs is not None:
        overrides["ablation.epochs"] = args.epochs
    return config.with_overrides(overrides)


def dispatch(args: argparse.Namespace) -> None:
    config = _resolve_config(args)
    verbose = config.verbose_logging
    if args.command == "gen-data":
        gen_data.run(config, out=args.out, verbose=verbose)
    elif args.command == "train":
        train.run(config, data_dir=args.data, out=args.out, verbose=verbose)
    elif args.command == "eval":
        evaluate.run(config, args.checkpoint, data_dir=args.data, out=args.out,
                     split=args.split, verbose=verbose)
    elif args.command == "ablate":
        seeds = None
        if args.seeds is not None or args.seed is not None:
            start = args.seed if args.seed is not None else 0
            count = args.seeds if args.seeds is not None else len(config.ablation_seeds)
            seeds = list(range(start, start + count))
        ablate.run(config, data_dir=args.data, out=args.out, seeds=seeds,
                   parallel=args.parallel, verbose=verbose)
    elif args.command == "analyze-freq":
        analyze_freq.run(config, data_dir=args.data, out=args.out, split=args.split,
                         sample=args.sample, patches=args.patch, verbose=verbose)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        dispatch(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ShapeError) as e:
        print(f"Data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
