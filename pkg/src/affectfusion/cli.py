"""Command-line entry point: ``python -m affectfusion <stage> [options]``.

Each subcommand runs the pipeline up to and including that stage, reusing
cached stages whose config sections are unchanged.  ``run`` runs every
stage.  Failures exit with a code that names the failing stage
(:data:`EXIT_CODES`).
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, PipelineConfig, load_config
from .pipeline import STAGES, StageError, run_pipeline
from .signals import DataError

EXIT_CODES = {
    "usage": 2, "config": 3, "ingest": 4,
    "synth": 10, "facefit": 11, "featurize": 12, "recur": 13, "metrics": 14,
    "train": 15, "report": 16,
}
HELP = {
    "synth": "generate the synthetic study into OUT/data",
    "facefit": "fit the face model to every landmark trace",
    "featurize": "filter physiology, detect events and extract aligned window features",
    "recur": "embed the window series and build recurrence and joint recurrence plots",
    "metrics": "compute network metric vectors of every plot",
    "train": "leave-one-subject-out classification and regression",
    "report": "write the result tables",
    "run": "run every stage",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectfusion",
        description="Run the affect-decoding pipeline up to a stage, reusing cached stages.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in STAGES + ("run",):
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", help="JSON config file (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--out", default="artifacts", help="artifact directory")
        p.add_argument("--data", help="existing session directories instead of synthesis")
        p.add_argument("--quiet", action="store_true", help="no progress messages")
    return parser


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    if args.command == "synth" and args.data:
        parser.error("synth writes its own data; drop --data")
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        cfg = _config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    until = "report" if args.command == "run" else args.command
    try:
        out = run_pipeline(cfg, args.data, args.out, until, args.jobs, log)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.stage, 1)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_CODES["ingest"]
    if until == "report" and not args.quiet:
        for task in ("classify", "regress"):
            with open(f"{out}/report/{task}.txt") as fh:
                print("".join(ln for ln in fh if not ln.startswith("#")))
    log(f"artifacts in {out} (config {cfg.hash()})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
