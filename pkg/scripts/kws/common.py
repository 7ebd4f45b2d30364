"""Flags shared by every subcommand and the config they resolve to."""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import List, Optional, Sequence

from kws.config import PipelineConfig, load_config
from kws.corpus import BACKGROUND_LABEL, KeywordCorpus, LabelMap, UtteranceRecord, label_map_from_records


class KwsArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit status 1."""

    def error(self, message: str):
        self.print_usage()
        self.exit(1, f"error: ArgumentError: {message}\n")


def add_common_arguments(ap: argparse.ArgumentParser, out_help: str) -> None:
    ap.add_argument("--config", type=Path, default=None, help="YAML file for configuration.")
    ap.add_argument("--seed", type=int, default=None, help="overrides seed and train.seed")
    ap.add_argument("--out", type=Path, default=None, help=out_help)
    ap.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override, e.g. --set train.batch_size=64 (repeatable)",
    )


def flag(key: str, value) -> List[str]:
    """Dotlist entry for a flag that was given on the command line."""
    if value is None or value is False:
        return []
    if isinstance(value, (list, tuple)):
        return [f"{key}=[{','.join(str(v) for v in value)}]"]
    return [f"{key}={value}"]


def resolve_config(args: argparse.Namespace, flags: Sequence[str] = ()) -> PipelineConfig:
    """File, then ``--set`` overrides, then explicit flags (flags win)."""
    overrides = list(args.overrides) + list(flags)
    if args.seed is not None:
        overrides += [f"seed={args.seed}", f"train.seed={args.seed}"]
    return load_config(args.config, overrides)


def out_path(args: argparse.Namespace, default: Path) -> Path:
    return args.out if args.out is not None else default


def label_map_for(
    records: Sequence[UtteranceRecord], corpus: Optional[KeywordCorpus]
) -> LabelMap:
    """Corpus order when a corpus is given, sorted keywords otherwise."""
    if corpus is not None:
        return label_map_from_records(corpus, records)
    present = {r.keyword for r in records}
    keywords = sorted(present - {BACKGROUND_LABEL})
    if BACKGROUND_LABEL in present:
        keywords.append(BACKGROUND_LABEL)
    return LabelMap(tuple(keywords))
