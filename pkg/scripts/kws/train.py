"""
Train a keyword classifier on a manifest
=========================================
Records without a split are assigned train/val/test first (the split manifest
is written next to the checkpoint). Outputs under ``--out``:

    model.kws       checkpoint holding the best-validation-loss weights
    history.csv     epoch,train_loss,train_acc,val_loss,val_acc
    splits.csv      manifest with the split column filled in
    tb/             TensorBoard scalars when train.report_to=tensorboard
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from kws.checkpoint import save_checkpoint
from kws.config import require
from kws.corpus import load_corpus, load_manifest, save_manifest, select_split, split_manifest
from kws.model import ARCHITECTURES, build_model
from kws.training import Dataset, train
from kws.utils import get_logger
from scripts.kws.common import add_common_arguments, flag, label_map_for, out_path, resolve_config

logger = get_logger(__name__)


def add_parser(sub) -> None:
    ap = sub.add_parser("train", help="train kws-cnn or the dense baseline")
    add_common_arguments(ap, "output directory (default: paths.out_dir)")
    ap.add_argument("--manifest", default=None)
    ap.add_argument("--corpus", nargs="+", default=None, help="fixes the class order")
    ap.add_argument("--arch", choices=sorted(ARCHITECTURES), default=None)
    ap.add_argument("--split-mode", choices=["by_utterance", "by_speaker"], default=None)
    ap.add_argument("--resplit", action="store_true", help="ignore existing split assignments")
    ap.add_argument("--jobs", type=int, default=4, help="threads for audio loading")
    ap.set_defaults(run=run)


def run(args: argparse.Namespace) -> int:
    flags = (
        flag("paths.manifest", args.manifest)
        + flag("train.arch", args.arch)
        + flag("train.split_mode", args.split_mode)
    )
    cfg = resolve_config(args, flags)
    manifest = require(cfg.paths.manifest, "paths.manifest")
    out_dir = out_path(args, Path(cfg.paths.out_dir))
    tc = cfg.train

    records = load_manifest(manifest)
    root = manifest.parent
    if args.resplit or any(r.split is None for r in records):
        records = split_manifest(records, tc.split_ratios, tc.split_mode, cfg.seed)
        save_manifest(records, out_dir / "splits.csv", root=root)

    corpus_paths = args.corpus or ([cfg.paths.corpus] if cfg.paths.corpus else None)
    corpus = load_corpus(corpus_paths) if corpus_paths else None
    label_map = label_map_for(records, corpus)

    train_set = Dataset.from_records(
        select_split(records, "train"), root, label_map, cfg.audio.frame_len,
        cfg.audio.decoder_cmd, args.jobs,
    )
    val_set = Dataset.from_records(
        select_split(records, "val"), root, label_map, cfg.audio.frame_len,
        cfg.audio.decoder_cmd, args.jobs,
    )
    logger.info("train=%d val=%d classes=%d", len(train_set), len(val_set), len(label_map))

    model = build_model(
        tc.arch, cfg.audio.frame_len, label_map,
        seed=tc.seed, dropout=tc.dropout, dtype=np.dtype(tc.precision),
    )
    model, history = train(model, train_set, val_set, tc, log_dir=out_dir / "tb")

    checkpoint = out_dir / "model.kws"
    if cfg.paths.checkpoint and args.out is None:
        checkpoint = Path(cfg.paths.checkpoint)
    save_checkpoint(model, checkpoint)
    history.to_csv(out_dir / "history.csv")
    logger.info(
        "best epoch %d (val_loss=%.4f, %s)", history.best_epoch, history.best_val_loss, history.stop_reason
    )
    return 0


if __name__ == "__main__":
    from scripts.kws.cli import main

    sys.exit(main(["train", *sys.argv[1:]]))
