#!/usr/bin/env python3
"""
Keyword spotting pipeline
=========================
``python -m scripts.kws.cli <subcommand> [--config FILE] [--seed N] [--out PATH] [--set KEY=VALUE ...]``

Subcommands: ingest, synth, train, eval, spot, report.

Exit status: 0 success, 1 usage, 2 I/O, 3 data validation, 4 numeric failure.
Failures print a single ``error: <ExceptionName>: <message>`` line on stderr.
"""

from __future__ import annotations

import sys
from typing import Optional, Sequence

from kws.errors import KwsError
from scripts.kws import evaluate, ingest, report, spot, synth, train
from scripts.kws.common import KwsArgumentParser

SUBCOMMANDS = (ingest, synth, train, evaluate, spot, report)


def build_parser() -> KwsArgumentParser:
    ap = KwsArgumentParser(prog="kws", description="Keyword spotting for radio monitoring.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for module in SUBCOMMANDS:
        module.add_parser(sub)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args) or 0
    except KwsError as e:
        message = " ".join(str(e).splitlines())
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
