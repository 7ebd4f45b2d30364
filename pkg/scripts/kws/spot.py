"""
Scan recordings with a trained checkpoint and write one debounced events CSV
(``keyword,start_s,confidence``) per recording into ``--out``.

Directories are expanded to the audio files they contain. ``--truth`` scores a
single recording against planted ground truth (as written by ``synth --stream``).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List

from kws.checkpoint import load_checkpoint
from kws.config import require
from kws.corpus import AUDIO_SUFFIXES, load_planted
from kws.detector import match_planted, spot_many, write_events_csv
from kws.errors import ArgumentError, StorageError
from kws.utils import get_logger
from scripts.kws.common import add_common_arguments, flag, out_path, resolve_config

logger = get_logger(__name__)


def add_parser(sub) -> None:
    ap = sub.add_parser("spot", help="detect keywords in long recordings")
    add_common_arguments(ap, "directory for the events CSVs (default: <out_dir>/spot)")
    ap.add_argument("recordings", nargs="+", type=Path, help="audio files or directories")
    ap.add_argument("--checkpoint", default=None)
    ap.add_argument("--threshold", type=float, default=None)
    ap.add_argument("--window", type=float, default=None, help="seconds; must equal the model frame")
    ap.add_argument("--hop", type=float, default=None, help="seconds between window starts")
    ap.add_argument("--min-gap", type=float, default=None, help="debounce gap in seconds")
    ap.add_argument("--jobs", type=int, default=None, help="recordings processed concurrently")
    ap.add_argument("--truth", type=Path, default=None, help="planted ground-truth CSV to score against")
    ap.add_argument("--tolerance", type=float, default=0.5, help="seconds, for --truth")
    ap.set_defaults(run=run)


def expand(paths: List[Path]) -> List[Path]:
    files = []
    for path in paths:
        if path.is_dir():
            files += sorted(p for p in path.rglob("*") if p.suffix.lower() in AUDIO_SUFFIXES)
        elif path.is_file():
            files.append(path)
        else:
            raise StorageError(f"recording not found: {path}")
    return files


def run(args: argparse.Namespace) -> int:
    flags = (
        flag("paths.checkpoint", args.checkpoint)
        + flag("detector.threshold", args.threshold)
        + flag("detector.window_s", args.window)
        + flag("detector.hop_s", args.hop)
        + flag("detector.min_gap_s", args.min_gap)
        + flag("detector.jobs", args.jobs)
    )
    cfg = resolve_config(args, flags)
    out_dir = out_path(args, Path(cfg.paths.out_dir) / "spot")
    recordings = expand(args.recordings)
    if not recordings:
        raise ArgumentError("no audio files among the given recordings")
    if args.truth is not None and len(recordings) != 1:
        raise ArgumentError("--truth scores exactly one recording")

    model = load_checkpoint(require(cfg.paths.checkpoint, "paths.checkpoint"))
    results = spot_many(model, recordings, cfg.detector, cfg.audio.decoder_cmd)
    for path, events in results.items():
        write_events_csv(events, out_dir / f"{Path(path).stem}.events.csv")

    if args.truth is not None:
        events = next(iter(results.values()))
        match = match_planted(events, load_planted(args.truth), args.tolerance)
        logger.info(
            "planted %d: hits=%d misses=%d false=%d",
            len(match.hits) + len(match.misses), len(match.hits), len(match.misses), len(match.false_events),
        )
    return 0


if __name__ == "__main__":
    from scripts.kws.cli import main

    sys.exit(main(["spot", *sys.argv[1:]]))
