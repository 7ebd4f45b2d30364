"""Mini-batch Adam training with early stopping, and evaluation."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from kws.audio import load_clip
from kws.config import TrainConfig
from kws.corpus import LabelMap, UtteranceRecord
from kws.errors import ArgumentError, NumericError
from kws.metrics import EvalReport
from kws.model import ModelGraph
from kws.nn import AdamState, adam_step, softmax_cross_entropy
from kws.utils import atomic_write, get_logger

logger = get_logger(__name__)

CONTINUE = "continue"
STOP = "stop"
EARLY_STOP = "early_stop"
MAX_EPOCHS = "max_epochs"
HISTORY_FIELDS = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]


@dataclass
class Dataset:
    x: np.ndarray  # (N, 1, frame_len)
    y: np.ndarray  # (N,) class indices
    paths: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_records(
        cls,
        records: Sequence[UtteranceRecord],
        root: Union[str, Path],
        label_map: LabelMap,
        frame_len: int,
        decoder_cmd: Optional[str] = None,
        jobs: int = 4,
    ) -> "Dataset":
        labels = []
        for r in records:
            if r.keyword not in label_map:
                raise ArgumentError(f"label {r.keyword!r} of {r.path} is not in the label map")
            labels.append(label_map.index(r.keyword))

        def load(record: UtteranceRecord) -> np.ndarray:
            return load_clip(record.resolve(root), frame_len, decoder_cmd).samples

        x = np.zeros((len(records), 1, frame_len))
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            frames = pool.map(load, records)
            for i, frame in enumerate(tqdm(frames, total=len(records), desc="load", disable=None)):
                x[i, 0] = frame
        return cls(x, np.asarray(labels, dtype=np.int64), [r.path for r in records])


# ---------------------------------------------------------------------------
# Early stopping
# ---------------------------------------------------------------------------


@dataclass
class EarlyStopState:
    patience: int = 10
    best_loss: float = math.inf
    best_epoch: int = 0
    epoch: int = 0
    wait: int = 0


def early_stop_update(state: EarlyStopState, val_loss: float) -> str:
    """Record one epoch's validation loss; ``stop`` once ``patience`` epochs
    pass without a strict improvement over the best loss."""
    if math.isnan(val_loss):
        raise NumericError("validation loss is NaN", epoch=state.epoch + 1)
    state.epoch += 1
    if val_loss < state.best_loss:
        state.best_loss = val_loss
        state.best_epoch = state.epoch
        state.wait = 0
    else:
        state.wait += 1
    return STOP if state.wait >= state.patience else CONTINUE


# ---------------------------------------------------------------------------
# History
# ---------------------------------------------------------------------------


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    rows: List[EpochRow] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = MAX_EPOCHS

    @property
    def best_val_loss(self) -> float:
        return min(r.val_loss for r in self.rows)

    def to_csv(self, path: Union[str, Path]) -> None:
        with atomic_write(path) as f:
            writer = csv.writer(f)
            writer.writerow(HISTORY_FIELDS)
            for r in self.rows:
                writer.writerow(
                    [r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_loss), repr(r.val_acc)]
                )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _batched_loss(
    model: ModelGraph, data: Dataset, batch_size: int
) -> Tuple[float, float]:
    total_loss = 0.0
    correct = 0
    for start in range(0, len(data), batch_size):
        xb = data.x[start : start + batch_size]
        yb = data.y[start : start + batch_size]
        logits = model.net.infer(xb).astype(np.float64)
        loss, _ = softmax_cross_entropy(logits, yb)
        total_loss += loss * len(yb)
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total_loss / len(data), correct / len(data)


def _tensorboard(log_dir: Optional[Path]):
    if log_dir is None:
        return None
    try:
        from torch.utils.tensorboard import SummaryWriter
    except ImportError:
        logger.warning("tensorboard is not installed; scalars will not be written")
        return None
    return SummaryWriter(log_dir=str(log_dir))


def train(
    model: ModelGraph,
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
    log_dir: Optional[Path] = None,
) -> Tuple[ModelGraph, TrainHistory]:
    """Train in place and return the model holding its best-validation-loss weights."""
    config.validate()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ArgumentError("training needs non-empty train and validation sets")

    dtype = np.dtype(config.precision)
    model.net.astype(dtype)
    x_train = train_set.x.astype(dtype)
    val = Dataset(val_set.x.astype(dtype), val_set.y)

    params = model.net.named_params()
    optimizer = AdamState(lr=config.learning_rate)
    stopper = EarlyStopState(patience=config.patience)
    history = TrainHistory()
    best_params: Dict[str, np.ndarray] = {}
    rng = np.random.default_rng(config.seed)
    writer = _tensorboard(log_dir) if config.report_to == "tensorboard" else None

    n = len(train_set)
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(n)
            total_loss = 0.0
            correct = 0
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                xb, yb = x_train[idx], train_set.y[idx]
                try:
                    logits = model.logits(xb, train=True)
                    loss, grad = softmax_cross_entropy(logits.astype(np.float64), yb)
                    if not math.isfinite(loss):
                        raise NumericError("training loss is not finite")
                    model.net.backward(grad.astype(dtype))
                    adam_step(params, model.net.named_grads(), optimizer)
                except NumericError as e:
                    err = NumericError(str(e), epoch=epoch)
                    err.parameter = e.parameter
                    raise err from e
                total_loss += loss * len(idx)
                correct += int((logits.argmax(axis=1) == yb).sum())

            val_loss, val_acc = _batched_loss(model, val, config.batch_size)
            if not math.isfinite(val_loss):
                raise NumericError("validation loss is not finite", epoch=epoch)
            row = EpochRow(epoch, total_loss / n, correct / n, val_loss, val_acc)
            history.rows.append(row)
            logger.info(
                "epoch %d train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f",
                epoch, row.train_loss, row.train_acc, row.val_loss, row.val_acc,
            )
            if writer is not None:
                for name in HISTORY_FIELDS[1:]:
                    writer.add_scalar(name, getattr(row, name), epoch)

            decision = early_stop_update(stopper, val_loss)
            if stopper.best_epoch == epoch:
                best_params = {k: v.copy() for k, v in params.items()}
            if decision == STOP:
                history.stop_reason = EARLY_STOP
                logger.info(
                    "early stop at epoch %d (best epoch %d, val_loss=%.4f)",
                    epoch, stopper.best_epoch, stopper.best_loss,
                )
                break
    finally:
        if writer is not None:
            writer.close()

    for name, value in best_params.items():
        np.copyto(params[name], value)
    history.best_epoch = stopper.best_epoch
    model.metadata.update(
        {
            "epochs_run": len(history.rows),
            "best_epoch": history.best_epoch,
            "best_val_loss": stopper.best_loss,
            "stop_reason": history.stop_reason,
            "seed": config.seed,
            "precision": config.precision,
        }
    )
    return model, history


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def predict_labels(model: ModelGraph, x: np.ndarray, batch_size: int = 64, jobs: int = 1) -> np.ndarray:
    """Argmax class per frame; batches fan out over ``jobs`` threads."""
    starts = range(0, len(x), batch_size)

    def run(start: int) -> np.ndarray:
        return model.predict_batch(x[start : start + batch_size]).argmax(axis=1)

    if jobs <= 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, starts))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def evaluate(model: ModelGraph, data: Dataset, jobs: int = 1) -> EvalReport:
    if len(data) == 0:
        raise ArgumentError("cannot evaluate on an empty set")
    k = model.num_classes
    if data.y.min() < 0 or data.y.max() >= k:
        raise ArgumentError(f"labels outside the model's {k} classes")
    predicted = predict_labels(model, data.x, jobs=jobs)
    report = EvalReport.from_predictions(data.y, predicted, model.label_map.labels)
    logger.info(
        "accuracy=%.4f precision=%.4f recall=%.4f f1=%.4f (n=%d)",
        report.accuracy, report.precision, report.recall, report.f1, report.total,
    )
    return report
