"""
Turn events CSVs into per-recording frequency reports (``<id>.report.json`` and
``<id>.counts.csv``); with several inputs an aggregate ``all`` report is added.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from kws.corpus import default_corpus, load_corpus
from kws.detector import debounce, frequency_report, merge_reports, read_events_csv
from kws.utils import get_logger
from scripts.kws.common import add_common_arguments, out_path, resolve_config

logger = get_logger(__name__)

EVENTS_SUFFIX = ".events"


def add_parser(sub) -> None:
    ap = sub.add_parser("report", help="per-keyword frequency reports from events CSVs")
    add_common_arguments(ap, "directory for the reports (default: <out_dir>/report)")
    ap.add_argument("events", nargs="+", type=Path, help="events CSVs written by spot")
    ap.add_argument("--corpus", nargs="+", default=None, help="keyword list(s) for the description column")
    ap.set_defaults(run=run)


def recording_id(path: Path) -> str:
    stem = path.stem
    return stem[: -len(EVENTS_SUFFIX)] if stem.endswith(EVENTS_SUFFIX) else stem


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out_dir = out_path(args, Path(cfg.paths.out_dir) / "report")
    corpus_paths = args.corpus or ([cfg.paths.corpus] if cfg.paths.corpus else None)
    corpus = load_corpus(corpus_paths) if corpus_paths else default_corpus()

    reports = []
    for path in args.events:
        events = sorted(read_events_csv(path), key=lambda e: e.start_time)
        # idempotent on spot output
        r = frequency_report(recording_id(path), debounce(events, cfg.detector.min_gap_s), corpus, cfg.detector)
        r.to_json(out_dir / f"{r.recording_id}.report.json")
        r.to_counts_csv(out_dir / f"{r.recording_id}.counts.csv")
        logger.info("%s\n%s", r.recording_id, r.table())
        reports.append(r)

    if len(reports) > 1:
        total = merge_reports("all", reports)
        total.to_json(out_dir / "all.report.json")
        total.to_counts_csv(out_dir / "all.counts.csv")
        logger.info("all\n%s", total.table())
    return 0


if __name__ == "__main__":
    from scripts.kws.cli import main

    sys.exit(main(["report", *sys.argv[1:]]))
