"""
Evaluate one or more checkpoints on a manifest split and write the metrics JSON.

With several checkpoints the JSON maps each checkpoint name to its report and
a comparison table (accuracy, average precision/recall, F1) is logged.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from kws.checkpoint import load_checkpoint
from kws.config import require
from kws.corpus import SPLITS, load_manifest, select_split
from kws.errors import ArgumentError, EmptyManifestError
from kws.metrics import compare_reports
from kws.training import Dataset, evaluate
from kws.utils import atomic_write, get_logger
from scripts.kws.common import add_common_arguments, flag, out_path, resolve_config

logger = get_logger(__name__)


def add_parser(sub) -> None:
    ap = sub.add_parser("eval", help="accuracy / precision / recall / F1 on a split")
    add_common_arguments(ap, "metrics JSON to write (default: <out_dir>/eval.json)")
    ap.add_argument("--checkpoint", nargs="+", default=None)
    ap.add_argument("--manifest", default=None, help="manifest with a split column")
    ap.add_argument("--split", choices=[*SPLITS, "all"], default="test")
    ap.add_argument("--weighted", action="store_true", help="support-weighted averages in the table")
    ap.add_argument("--jobs", type=int, default=4)
    ap.set_defaults(run=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, flag("paths.manifest", args.manifest))
    manifest = require(cfg.paths.manifest, "paths.manifest")
    checkpoints = args.checkpoint or [str(require(cfg.paths.checkpoint, "paths.checkpoint"))]
    out = out_path(args, Path(cfg.paths.out_dir) / "eval.json")

    records = load_manifest(manifest)
    if args.split != "all":
        if any(r.split is None for r in records):
            raise ArgumentError(f"{manifest} has unassigned splits; pass the splits.csv written by train")
        records = select_split(records, args.split)
        if not records:
            raise EmptyManifestError(f"no {args.split} records in {manifest}")

    reports = {}
    for path in checkpoints:
        model = load_checkpoint(path)
        data = Dataset.from_records(
            records, manifest.parent, model.label_map, model.frame_len, cfg.audio.decoder_cmd, args.jobs
        )
        name = str(path)
        reports[name] = evaluate(model, data, jobs=args.jobs)

    if len(reports) == 1:
        next(iter(reports.values())).to_json(out)
    else:
        with atomic_write(out) as f:
            json.dump({name: r.to_dict() for name, r in reports.items()}, f, indent=2)
            f.write("\n")
        logger.info("\n%s", compare_reports(reports, weighted=args.weighted))
    logger.info("wrote %s", out)
    return 0


if __name__ == "__main__":
    from scripts.kws.cli import main

    sys.exit(main(["eval", *sys.argv[1:]]))
