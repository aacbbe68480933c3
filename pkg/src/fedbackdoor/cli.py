"""Command-line experiment runner.

    fedbackdoor run <config-or-preset> [--out DIR] [--threads N] [--dry-run]
    fedbackdoor triggers export [--num-classes N] [--out FILE]
    fedbackdoor verify <manifest> [--threads N]
    fedbackdoor make-data <outdir> [--train N] [--test N] [--seed S]
    fedbackdoor presets

Relative dataset paths in configs resolve against $FEDBACKDOOR_DATA_DIR
(default `./data`); `make-data` writes a synthetic IDX dataset there.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import synth
from .config import list_presets, resolve_config
from .errors import ConfigError, SimulationError
from .runner import run_experiment, verify_manifest
from .triggers import builtin_triggers, catalogue_json


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedbackdoor",
        description="Simulate federated averaging under multi-adversary backdoor attacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file or preset")
    run_p.add_argument("config", help="path to a JSON config, or a preset name")
    run_p.add_argument("--out", default=None, help="output directory (overrides config)")
    run_p.add_argument("--threads", type=int, default=1,
                       help="worker threads for per-round client training")
    run_p.add_argument("--dry-run", action="store_true",
                       help="validate the config and print resolved parameters")

    trig_p = sub.add_parser("triggers", help="trigger catalogue utilities")
    trig_sub = trig_p.add_subparsers(dest="trigger_command", required=True)
    exp_p = trig_sub.add_parser("export", help="export the catalogue as JSON")
    exp_p.add_argument("--num-classes", type=int, default=10)
    exp_p.add_argument("--out", default=None, help="write to file instead of stdout")

    ver_p = sub.add_parser("verify", help="re-run a manifest and diff the round records")
    ver_p.add_argument("manifest", help="path to a run's manifest.json")
    ver_p.add_argument("--threads", type=int, default=1)

    data_p = sub.add_parser("make-data", help="generate a synthetic IDX digit dataset")
    data_p.add_argument("outdir")
    data_p.add_argument("--train", type=int, default=synth.DEFAULT_TRAIN)
    data_p.add_argument("--test", type=int, default=synth.DEFAULT_TEST)
    data_p.add_argument("--seed", type=int, default=7)

    sub.add_parser("presets", help="list the shipped preset configs")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = resolve_config(args.config)
            if args.dry_run:
                print(json.dumps(cfg.to_dict(), indent=2))
                return 0
            if args.threads < 1:
                print("error: --threads must be >= 1", file=sys.stderr)
                return 2
            run_experiment(cfg, out_dir=args.out, threads=args.threads)
            return 0

        if args.command == "triggers":
            text = catalogue_json(builtin_triggers(args.num_classes))
            if args.out:
                with open(args.out, "w") as f:
                    f.write(text + "\n")
            else:
                print(text)
            return 0

        if args.command == "verify":
            return 0 if verify_manifest(args.manifest, threads=args.threads) else 1

        if args.command == "make-data":
            paths = synth.write_dataset(args.outdir, args.train, args.test, args.seed)
            print(f"wrote {args.train}+{args.test} samples:")
            for role, path in paths.items():
                print(f"  {role}: {path}")
            return 0

        if args.command == "presets":
            for name in list_presets():
                print(name)
            return 0
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except (SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
