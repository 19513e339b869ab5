"""Command-line front end: config in, artifact directory out.

Every command takes a JSON config (see config.CONFIG_SCHEMA) and writes
its outputs plus a manifest into the output directory.  Exit codes: 0
success, 2 config/schema violation, 3 computation error, 4 I/O failure.
Errors are reported as a single machine-parsable stderr line.

The PPSTAT_SEED environment variable, when set, overrides the config
seed; --reps-scale rescales replicate counts for smoke runs.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import COMMANDS, ConfigError, load_config
from .core import PPStatError
from .runner import run

EXIT_SCHEMA = 2
EXIT_COMPUTE = 3
EXIT_IO = 4


def _fail(code: int, kind: str, exc: BaseException) -> int:
    msg = " ".join(str(exc).split())
    print(f'ppstat-error code={code} kind={kind} detail="{msg}"',
          file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppstat",
        description="point-process simulation and analysis workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, help=f"run a {cmd} config")
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--out", default=None,
                        help="output directory (overrides config)")
        sp.add_argument("--workers", type=int, default=1,
                        help="worker processes for replicate sweeps")
        sp.add_argument("--reps-scale", type=float, default=1.0,
                        help="multiplier on replicate counts (smoke runs)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed_override = None
    env_seed = os.environ.get("PPSTAT_SEED")
    if env_seed is not None:
        try:
            seed_override = int(env_seed)
        except ValueError as exc:
            return _fail(EXIT_SCHEMA, "schema", exc)
    try:
        config = load_config(args.config, seed_override=seed_override,
                             reps_scale=args.reps_scale,
                             out_override=args.out, workers=args.workers)
    except ConfigError as exc:
        return _fail(EXIT_SCHEMA, "schema", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    if config.command != args.command:
        return _fail(EXIT_SCHEMA, "schema", ValueError(
            f"config command {config.command!r} does not match "
            f"subcommand {args.command!r}"))
    try:
        manifest = run(config)
    except (PPStatError, ValueError, ZeroDivisionError, FloatingPointError,
            OverflowError) as exc:
        return _fail(EXIT_COMPUTE, "compute", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    out_dir = config.out_dir or "ppstat-out"
    print(f"{args.command}: {len(manifest.outputs)} outputs in {out_dir} "
          f"(config {manifest.config_hash[:12]}, "
          f"{manifest.wall_clock_s:.2f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
