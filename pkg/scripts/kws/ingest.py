"""
Index an utterance directory against the keyword corpus, decode every file to
8 kHz PCM WAV and write the canonical manifest.

Layout read: ``<audio_dir>/<keyword>/<speaker_id>_<n>.<ext>`` (or a sidecar
``manifest.csv``). Files that fail to decode are skipped and listed as warnings.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

from tqdm import tqdm

from kws.audio import read_clip, resample, write_wav
from kws.config import PIPELINE_RATE, PipelineConfig, require
from kws.corpus import Exclusion, UtteranceRecord, build_manifest, load_corpus, save_manifest
from kws.errors import DataError, EmptyManifestError
from kws.utils import get_logger
from scripts.kws.common import add_common_arguments, flag, out_path, resolve_config

logger = get_logger(__name__)


def add_parser(sub) -> None:
    ap = sub.add_parser("ingest", help="decode audio and build the manifest")
    add_common_arguments(ap, "manifest CSV to write (default: <out_dir>/manifest.csv)")
    ap.add_argument("--audio-dir", default=None, help="directory of <keyword>/<speaker>_<n>.<ext>")
    ap.add_argument("--corpus", nargs="+", default=None, help="keyword list CSV(s), first wins")
    ap.add_argument("--wav-dir", type=Path, default=None, help="canonical WAVs (default: next to the manifest)")
    ap.add_argument("--jobs", type=int, default=4)
    ap.set_defaults(run=run)


def convert(
    record: UtteranceRecord, audio_dir: Path, wav_dir: Path, cfg: PipelineConfig
) -> Tuple[Optional[UtteranceRecord], Optional[Exclusion]]:
    try:
        clip = resample(read_clip(record.resolve(audio_dir), cfg.audio.decoder_cmd), PIPELINE_RATE)
    except DataError as e:
        return None, Exclusion(record.path, str(e))
    rel = Path(record.path).with_suffix(".wav")
    write_wav(wav_dir / rel, clip, cfg.audio.bits)
    return replace(record, path=rel.as_posix()), None


def run(args: argparse.Namespace) -> int:
    flags = flag("paths.audio_dir", args.audio_dir)
    cfg = resolve_config(args, flags)
    audio_dir = require(cfg.paths.audio_dir, "paths.audio_dir")
    corpus_paths = args.corpus or [str(require(cfg.paths.corpus, "paths.corpus"))]
    manifest = out_path(args, Path(cfg.paths.manifest or Path(cfg.paths.out_dir) / "manifest.csv"))
    wav_dir = args.wav_dir or manifest.parent / "wav"

    corpus = load_corpus(corpus_paths)
    for issue in corpus.issues:
        logger.warning("corpus: %s", issue)
    excluded: List[Exclusion] = []
    records = build_manifest(audio_dir, corpus, excluded, jobs=args.jobs)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(
            tqdm(
                pool.map(lambda r: convert(r, audio_dir, wav_dir, cfg), records),
                total=len(records),
                desc="ingest",
                disable=None,
            )
        )

    kept = []
    for record, skipped in results:
        if skipped is not None:
            logger.warning("skipped %s", skipped)
            excluded.append(skipped)
        else:
            kept.append(record)
    if not kept:
        raise EmptyManifestError(f"no file under {audio_dir} could be decoded")
    save_manifest(kept, manifest, root=wav_dir)
    logger.info("wrote %s: %d records, %d skipped or excluded", manifest, len(kept), len(excluded))
    return 0


if __name__ == "__main__":
    from scripts.kws.cli import main

    sys.exit(main(["ingest", *sys.argv[1:]]))
