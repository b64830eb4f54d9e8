"""Command line entry point: one subcommand per experiment kind."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import KINDS, ConfigError, apply_overrides, load_raw
from .experiments import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="korteweg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", type=Path, help="YAML or JSON config file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", type=Path, default=Path("out") / kind, help="output directory")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config key, e.g. params.kappa_bar=1.5; repeatable")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = apply_overrides(load_raw(args.config), args.override)
        if args.seed is not None:
            raw["seed"] = args.seed
        manifest = run(raw, args.kind, args.out)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(f"{args.kind}: {manifest['status']} -> {args.out / 'manifest.json'}")
    return 0 if manifest["status"] == "ok" else 1


if __name__ == "__main__":
    raise SystemExit(main())
