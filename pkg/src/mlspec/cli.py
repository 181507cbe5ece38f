"""Command line entry point: ``mlspec <subcommand> [--config PATH] ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness.config import KINDS, ConfigError, load_config
from .harness.emit import emit
from .harness.runners import run_experiment
from .harness.selftest import run_selftest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SELFTEST = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlspec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} Monte Carlo study")
        p.add_argument("--config", type=Path, help="JSON document merged onto the preset")
        p.add_argument("--out", type=Path, help="output directory (default: config 'out' or ./results/<kind>)")
        p.add_argument("--threads", type=int, help="number of worker processes")
        p.add_argument("--full-scale", action="store_true", help="start from the full-scale preset")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    sub.add_parser("selftest", help="fast sanity checks; exit code 3 on failure")
    return parser


def _run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config, args.command, args.full_scale, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or (Path(cfg.out) if cfg.out else Path("results") / cfg.kind)
    result = run_experiment(cfg)
    formats = ("csv", "json") if args.format == "both" else (args.format,)
    written = emit(result, out, formats)
    failures = sum(r.failed for r in result.records)
    print(f"{cfg.kind}: {len(result.records)} records, {failures} failed -> {out}")
    print(json.dumps(json.loads(written["summary"].read_text()), indent=1))
    return EXIT_OK


def _selftest() -> int:
    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail} ({r.seconds:.1f}s)")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "selftest":
        return _selftest()
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
