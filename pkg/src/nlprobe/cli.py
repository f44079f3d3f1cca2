"""Command line entry point: ``nlprobe <subcommand> --config fig1a``.

Exit codes: 0 success, 1 usage or config error, 2 finished with flagged
rows or failed checks, 3 fatal numeric error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, ProbeError, RegimeError
from .sweep import RUNNERS, builtin_configs, load_config
from .validation import run_validate

EXIT_OK, EXIT_USAGE, EXIT_FLAGGED, EXIT_FATAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sweep_flags(p):
    p.add_argument("--config", required=True, help="INI file or built-in name (" + ", ".join(builtin_configs()) + ")")
    p.add_argument("--out", type=Path, help="CSV path; a .gp plot script is written next to it")
    p.add_argument("--workers", type=int, help="worker processes (default from config)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VAL", help="e.g. beta_over_omega.count=8")
    p.add_argument("--allow-out-of-regime", action="store_true", help="permit beta > omega or beta t > 0.05")


def build_parser():
    parser = _Parser(prog="nlprobe", description="Nonlinear bosonic frequency probes")
    parser.add_argument("--version", action="version", version=f"nlprobe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in RUNNERS:
        _sweep_flags(sub.add_parser(name, help=f"write the {name} CSV"))
    val = sub.add_parser("validate", help="run invariant and acceptance checks")
    val.add_argument("--group", action="append", choices=("properties", "acceptance"))
    val.add_argument("--force-dim", type=int, help="evaluate every check at this fixed truncation")
    return parser


def _run_sweep(args):
    config = load_config(args.config, args.override, allow_out_of_regime=args.allow_out_of_regime)
    if args.out is not None:
        config = config.replace(out_path=args.out)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be a positive integer")
        config = config.replace(workers=args.workers)
    result = RUNNERS[args.command](config)
    for line in result.footer:
        print(f"# {line}")
    print(f"wrote {result.path}")
    return result.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            if args.force_dim is not None and args.force_dim < 2:
                raise ConfigError("--force-dim must be at least 2")
            return run_validate(groups=args.group, force_dim=args.force_dim)
        return _run_sweep(args)
    except (ConfigError, RegimeError, OSError) as exc:
        print(f"nlprobe: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProbeError as exc:
        print(f"nlprobe: fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
