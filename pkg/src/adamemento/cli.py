"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime abort,
3 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .config import parse_config
from .env import make_env
from .errors import AdaMementoError, CompatibilityError, ConfigError, TrainingAbort

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_FAILED = 0, 1, 2, 3


def _config_args(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--env", help="cliff_walking, four_rooms or dark_chamber")
    p.add_argument("--no-memory", action="store_true")
    p.add_argument("--no-curiosity", action="store_true")
    p.add_argument("--no-f-discriminator", action="store_true")


def build_config(args):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out:
        overrides.append(f"out_dir={args.out}")
    if args.env:
        overrides.append(f"env.name={args.env}")
    for flag, key in (("no_memory", "disable_memory"), ("no_curiosity", "disable_curiosity"),
                      ("no_f_discriminator", "disable_f_discriminator")):
        if getattr(args, flag):
            overrides.append(f"{key}=true")
    return parse_config(args.config, overrides)


def _parser():
    ap = argparse.ArgumentParser(prog="adamemento")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one seeded training experiment")
    _config_args(p)

    p = sub.add_parser("verify", help="check the shaping and ensemble guarantees on random MDPs")
    p.add_argument("--seeds", type=int, default=1000, help="number of seeds, starting at --start")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--theorem", type=int, choices=(1, 2), action="append")
    p.add_argument("--kappa", type=float, default=0.85)
    p.add_argument("--out", default="verify.csv")

    for name, help_ in (("novelty-map", "per-cell intrinsic reward of a checkpoint"),
                        ("inspect-confidence", "per-cell max-action reflection confidence")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("checkpoint")
        p.add_argument("--out", required=True, help="output file (.csv, .pgm or .svg)")
        p.add_argument("--env")

    p = sub.add_parser("dump-memory", help="M-buffer trajectories as CSV")
    p.add_argument("checkpoint")
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="greedy rollouts of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--env")
    p.add_argument("--out", required=True, help="directory for replay.txt and replay.csv")

    p = sub.add_parser("plot", help="render a metrics CSV as SVG line charts")
    p.add_argument("metrics")
    p.add_argument("--out", required=True)
    return ap


def _env(name):
    return make_env(name) if name else None


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            cfg = build_config(args)
            metrics, ckpt = harness.run_experiment(cfg)
            print(f"metrics: {metrics}\ncheckpoint: {ckpt}")
        elif args.command == "verify":
            theorems = tuple(args.theorem or (1, 2))
            report = harness.verify(range(args.start, args.start + args.seeds), theorems, kappa=args.kappa)
            harness._write_text(args.out, report.to_csv())
            print(f"instances={report.instances} failures={report.failures}")
            return EXIT_FAILED if report.failures else EXIT_OK
        elif args.command == "novelty-map":
            grids = harness.novelty_map(args.checkpoint, _env(args.env))
            if args.out.endswith(".csv"):
                harness._write_text(args.out, harness.novelty_csv(*grids))
            else:
                harness.export_heatmap(grids[0], args.out)
        elif args.command == "inspect-confidence":
            harness.export_heatmap(harness.confidence_map(args.checkpoint, _env(args.env)), args.out)
        elif args.command == "dump-memory":
            harness._write_text(args.out, harness.dump_memory(args.checkpoint))
        elif args.command == "replay":
            text, table = harness.replay(args.checkpoint, args.episodes, _env(args.env))
            out = Path(args.out)
            harness._write_text(out / "replay.txt", text)
            harness._write_text(out / "replay.csv", table)
        elif args.command == "plot":
            harness._write_text(args.out, harness.plot_metrics(args.metrics))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingAbort, CompatibilityError, AdaMementoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
