"""
Render the tone-burst stand-in corpus (``wav/``, ``manifest.csv``, ``corpus.csv``)
or, with ``--stream``, one long recording with bursts planted at known offsets
(``stream.wav`` plus ``truth.csv``).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Tuple

from kws.audio import write_wav
from kws.corpus import save_planted, synth_dataset, synth_stream
from kws.errors import ArgumentError
from kws.utils import get_logger
from scripts.kws.common import add_common_arguments, flag, out_path, resolve_config

logger = get_logger(__name__)

DEFAULT_PLANTS = 12
FIRST_PLANT_S = 10.0


def add_parser(sub) -> None:
    ap = sub.add_parser("synth", help="write a synthetic corpus or planted stream")
    add_common_arguments(ap, "output directory (default: <out_dir>/synth)")
    ap.add_argument("--num-classes", type=int, default=None)
    ap.add_argument("--snr-db", type=float, default=None)
    ap.add_argument("--background", action="store_true", help="add a noise-only reject class")
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--per-class", type=int, default=None, help="utterances per class")
    mode.add_argument("--stream", type=float, default=None, metavar="SECONDS", help="render a planted stream")
    ap.add_argument(
        "--plant",
        action="append",
        default=[],
        metavar="CLASS:SECONDS",
        help="burst of class CLASS starting at SECONDS (repeatable, --stream only)",
    )
    ap.set_defaults(run=run)


def parse_plants(specs: List[str]) -> List[Tuple[int, float]]:
    plants = []
    for spec in specs:
        try:
            k, t = spec.split(":")
            plants.append((int(k), float(t)))
        except ValueError as e:
            raise ArgumentError(f"--plant expects CLASS:SECONDS, got {spec!r}") from e
    return plants


def default_plants(num_classes: int, duration_s: float) -> List[Tuple[int, float]]:
    """Evenly spaced bursts cycling through the classes."""
    span = duration_s - FIRST_PLANT_S - 2.0
    if span <= 0:
        raise ArgumentError(f"stream of {duration_s}s is too short for default plants")
    step = span / DEFAULT_PLANTS
    return [(i % num_classes, round(FIRST_PLANT_S + i * step, 2)) for i in range(DEFAULT_PLANTS)]


def run(args: argparse.Namespace) -> int:
    if args.plant and args.stream is None:
        raise ArgumentError("--plant only applies with --stream")
    flags = (
        flag("synth.num_classes", args.num_classes)
        + flag("synth.per_class", args.per_class)
        + flag("synth.snr_db", args.snr_db)
        + flag("synth.background_class", args.background)
    )
    cfg = resolve_config(args, flags)
    out_dir = out_path(args, Path(cfg.paths.out_dir) / "synth")
    s = cfg.synth

    if args.stream is not None:
        plants = parse_plants(args.plant) or default_plants(s.num_classes, args.stream)
        clip, truth = synth_stream(
            plants, args.stream, s.snr_db, cfg.seed, cfg.audio.frame_len, s.burst_s, s.pitch_jitter
        )
        write_wav(out_dir / "stream.wav", clip, cfg.audio.bits)
        save_planted(truth, out_dir / "truth.csv")
        logger.info("wrote %s/stream.wav (%.1fs, %d planted bursts)", out_dir, clip.duration, len(truth))
        return 0

    synth_dataset(
        out_dir,
        num_classes=s.num_classes,
        per_class=s.per_class,
        frame_len=cfg.audio.frame_len,
        snr_db=s.snr_db,
        seed=cfg.seed,
        burst_s=s.burst_s,
        onset_jitter_s=s.onset_jitter_s,
        amplitude_jitter=s.amplitude_jitter,
        pitch_jitter=s.pitch_jitter,
        envelope_jitter=s.envelope_jitter,
        background_class=s.background_class,
        bits=cfg.audio.bits,
    )
    return 0


if __name__ == "__main__":
    from scripts.kws.cli import main

    sys.exit(main(["synth", *sys.argv[1:]]))
