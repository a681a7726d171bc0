"""Command-line interface for the charging experiment pipeline.

Verbs map one-to-one onto pipeline stages; `run-all` chains them.
Exit codes: 0 success, 2 configuration error, 3 missing or stale
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, DrsmpcError, MissingArtifact, StaleArtifact
from .experiment import VARIANTS, ExperimentConfig, run_all, run_stage

_VERBS = ("simulate-data", "fit-pca", "train", "compute-dro", "run-control", "report", "run-all")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="experiment config JSON (default: packaged desk-scale config)")
    common.add_argument("--seed", type=int, metavar="N",
                        help="override the master seed from the config")
    common.add_argument("--out", default="out", metavar="DIR",
                        help="artifact directory (default: ./out)")

    parser = argparse.ArgumentParser(
        prog="drsmpc",
        description="surrogate-based robust battery charging experiment pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for verb in _VERBS:
        sp = sub.add_parser(verb, parents=[common])
        if verb == "run-control":
            sp.add_argument("--variant", required=True, choices=VARIANTS)
    return parser


def _load_config(args) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.load(args.config)
    else:
        config = ExperimentConfig.default()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "run-all":
            manifest = run_all(config, args.out)
            print(f"[run-all] complete; manifest at {manifest}")
        else:
            produced = run_stage(
                args.command, config, args.out,
                variant=getattr(args, "variant", None),
            )
            print(f"[{args.command}] wrote {len(produced)} artifacts under {args.out}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MissingArtifact, StaleArtifact) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DrsmpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
