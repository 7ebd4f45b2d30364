"""Keyword-spotting architectures assembled from ``kws.nn`` layers.

Layer-count convention for the 1D-CNN: convolutions, pooling layers, dense
layers and the final softmax are counted; activations, dropout and flatten are
not. Five conv + five pool + two hidden dense + one output dense + softmax
gives 14. The softmax itself is applied by ``predict`` and the loss rather than
living in the layer stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from kws.audio import FixedClip
from kws.config import FRAME_LEN
from kws.corpus import LabelMap
from kws.errors import ArgumentError, ShapeError
from kws.nn import Conv1d, Dense, Dropout, Flatten, Layer, MaxPool1d, ReLU, Sequential, softmax
from kws.utils import get_logger

logger = get_logger(__name__)

# (kernel width, output channels, pool width) per convolutional block
KWS_CNN_BLOCKS: Tuple[Tuple[int, int, int], ...] = (
    (13, 8, 4),
    (11, 16, 4),
    (9, 32, 4),
    (7, 64, 5),
    (5, 128, 4),
)
KWS_CNN_HIDDEN = (256, 128)
DENSE_BASELINE_HIDDEN = (512, 256, 128, 64)

COUNTED_KINDS = ("conv1d", "maxpool1d", "dense")


@dataclass
class ModelGraph:
    arch: str
    frame_len: int
    label_map: LabelMap
    net: Sequential
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.label_map)

    @property
    def dtype(self):
        params = self.net.named_params()
        return next(iter(params.values())).dtype if params else np.float64

    def logits(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Caching forward pass used by training; pair with ``net.backward``."""
        return self.net.forward(x, train=train)

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities ``(B, K)`` for frames shaped ``(B, 1, frame_len)``."""
        if x.ndim == 2:
            x = x[:, None, :]
        if x.shape[1:] != (1, self.frame_len):
            raise ShapeError(
                f"expected frames of {self.frame_len} samples, got shape {x.shape[1:]}"
            )
        logits = self.net.infer(np.asarray(x, dtype=self.dtype))
        return softmax(logits.astype(np.float64))

    def count_layers(self) -> int:
        counted = sum(layer.kind in COUNTED_KINDS for layer in self.net)
        return counted + 1  # softmax

    def summary(self) -> str:
        rows = [f"{self.arch}: frame {self.frame_len}, {self.num_classes} classes"]
        shape: Tuple[int, ...] = (1, self.frame_len)
        for i, layer in enumerate(self.net):
            shape = layer.output_shape(shape)
            rows.append(f"  {i:2d} {layer!r:<48} -> {str(shape):<14} {layer.num_params:>9,d}")
        rows.append(
            f"  params {self.net.num_params:,d}; {self.count_layers()} layers "
            f"(conv + pool + dense + softmax)"
        )
        return "\n".join(rows)


def predict(model: ModelGraph, clip: FixedClip) -> np.ndarray:
    """Probability vector over the model's K keywords."""
    if len(clip) != model.frame_len:
        raise ShapeError(f"clip has {len(clip)} samples, model expects {model.frame_len}")
    return model.predict_batch(np.asarray(clip.samples)[None, None, :])[0]


def _init(layers: Sequence[Layer], seed: int) -> None:
    rng = np.random.default_rng(seed)
    weighted = [layer for layer in layers if layer.params]
    for layer in weighted[:-1]:
        layer.init_params(rng, "he")
    weighted[-1].init_params(rng, "glorot")
    for layer in layers:
        if isinstance(layer, Dropout):
            layer.reseed(int(rng.integers(2**31)))


def _finish(
    arch: str, layers: List[Layer], frame_len: int, label_map: LabelMap, seed: int, dtype
) -> ModelGraph:
    net = Sequential(layers)
    out = net.output_shape((1, frame_len))
    if out != (len(label_map),):
        raise ShapeError(f"{arch} produces {out}, expected ({len(label_map)},)")
    _init(layers, seed)
    net.astype(dtype)
    model = ModelGraph(arch, frame_len, label_map, net)
    logger.info("%s", model.summary())
    return model


def build_kws_cnn(
    frame_len: int = FRAME_LEN,
    label_map: Optional[LabelMap] = None,
    seed: int = 0,
    dropout: float = 0.5,
    dtype=np.float64,
) -> ModelGraph:
    """Five conv/ReLU/max-pool blocks, two hidden dense layers with dropout, K logits."""
    if label_map is None:
        raise ArgumentError("build_kws_cnn needs a label map")
    layers: List[Layer] = []
    in_channels = 1
    for kernel, channels, pool in KWS_CNN_BLOCKS:
        layers += [Conv1d(in_channels, channels, kernel), ReLU(), MaxPool1d(pool)]
        in_channels = channels

    # the symbolic pass sizes the flatten output
    features = Sequential(layers).output_shape((1, frame_len))
    layers.append(Flatten())
    width = int(np.prod(features))
    for hidden in KWS_CNN_HIDDEN:
        layers += [Dense(width, hidden), ReLU(), Dropout(dropout)]
        width = hidden
    layers.append(Dense(width, len(label_map)))
    return _finish("kws-cnn", layers, frame_len, label_map, seed, dtype)


def build_dense_baseline(
    frame_len: int = FRAME_LEN,
    label_map: Optional[LabelMap] = None,
    seed: int = 0,
    dropout: float = 0.5,
    dtype=np.float64,
) -> ModelGraph:
    """Five fully connected layers on the raw waveform (no dropout)."""
    if label_map is None:
        raise ArgumentError("build_dense_baseline needs a label map")
    if frame_len < 1:
        raise ShapeError(f"frame length must be positive, got {frame_len}")
    layers: List[Layer] = [Flatten()]
    width = frame_len
    for hidden in DENSE_BASELINE_HIDDEN:
        layers += [Dense(width, hidden), ReLU()]
        width = hidden
    layers.append(Dense(width, len(label_map)))
    return _finish("dense", layers, frame_len, label_map, seed, dtype)


ARCHITECTURES: Dict[str, Callable[..., ModelGraph]] = {
    "kws-cnn": build_kws_cnn,
    "dense": build_dense_baseline,
}


def build_model(arch: str, frame_len: int, label_map: LabelMap, **kwargs) -> ModelGraph:
    if arch not in ARCHITECTURES:
        raise ArgumentError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}")
    return ARCHITECTURES[arch](frame_len, label_map, **kwargs)
