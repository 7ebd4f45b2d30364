"""Layers with explicit forward/backward passes on numpy arrays.

Activations are shaped ``(batch, channels, length)`` for the convolutional
stack and ``(batch, features)`` after flattening. Convolution is valid
(no padding) cross-correlation; the kernel is not flipped.
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from kws.errors import ArgumentError, NumericError, ShapeError

Tensor = np.ndarray
Shape = Tuple[int, ...]

TRAIN = "train"
INFER = "infer"


def check_finite(x: Tensor, where: str) -> Tensor:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {where}")
    return x


# ---------------------------------------------------------------------------
# Functional forms
# ---------------------------------------------------------------------------


def conv1d_output_length(length: int, kernel_size: int, stride: int) -> int:
    if kernel_size > length:
        raise ShapeError(f"kernel width {kernel_size} exceeds input length {length}")
    return (length - kernel_size) // stride + 1


def _windows(x: Tensor, width: int, stride: int) -> Tensor:
    # (B, C, L) -> (B, C, L', width) view
    return sliding_window_view(x, width, axis=2)[:, :, ::stride, :]


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    if x.ndim != 3:
        raise ShapeError(f"conv1d expects (B, C, L) input, got shape {x.shape}")
    if stride < 1:
        raise ArgumentError(f"stride must be >= 1, got {stride}")
    out_channels, in_channels, kernel_size = weight.shape
    if x.shape[1] != in_channels:
        raise ShapeError(f"conv1d expects {in_channels} input channels, got {x.shape[1]}")
    conv1d_output_length(x.shape[2], kernel_size, stride)

    windows = _windows(x, kernel_size, stride)
    out = np.tensordot(windows, weight, axes=([1, 3], [1, 2]))  # (B, L', Cout)
    return out.transpose(0, 2, 1) + bias[None, :, None]


def conv1d_backward(
    grad_out: Tensor, x: Tensor, weight: Tensor, stride: int = 1
) -> Tuple[Tensor, Tensor, Tensor]:
    """Returns ``(grad_input, grad_weight, grad_bias)``."""
    kernel_size = weight.shape[2]
    out_len = grad_out.shape[2]
    windows = _windows(x, kernel_size, stride)

    grad_weight = np.tensordot(grad_out, windows, axes=([0, 2], [0, 2]))
    grad_bias = grad_out.sum(axis=(0, 2))

    grad_input = np.zeros_like(x)
    span = stride * (out_len - 1) + 1
    for k in range(kernel_size):
        # (Cin, Cout) @ (B, Cout, L') -> (B, Cin, L')
        grad_input[:, :, k : k + span : stride] += np.matmul(weight[:, :, k].T, grad_out)
    return grad_input, grad_weight, grad_bias


def maxpool1d(x: Tensor, width: int, stride: Optional[int] = None) -> Tuple[Tensor, Tensor]:
    """Returns ``(out, argmax)``; ties go to the earliest index in the window."""
    stride = width if stride is None else stride
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d expects (B, C, L) input, got shape {x.shape}")
    if stride < 1 or width < 1:
        raise ArgumentError(f"pool width and stride must be >= 1, got {width}/{stride}")
    if width > x.shape[2]:
        raise ShapeError(f"pool width {width} exceeds input length {x.shape[2]}")

    windows = _windows(x, width, stride)
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool1d_backward(
    grad_out: Tensor, argmax: Tensor, input_shape: Shape, width: int, stride: Optional[int] = None
) -> Tensor:
    stride = width if stride is None else stride
    batch, channels, length = input_shape
    out_len = grad_out.shape[2]
    positions = np.arange(out_len)[None, None, :] * stride + argmax

    grad_input = np.zeros((batch * channels, length), dtype=grad_out.dtype)
    rows = np.arange(batch * channels)[:, None]
    flat_pos = positions.reshape(batch * channels, out_len)
    flat_grad = grad_out.reshape(batch * channels, out_len)
    if stride >= width:
        # windows do not overlap, every position is written once
        grad_input[rows, flat_pos] = flat_grad
    else:
        np.add.at(grad_input, (np.broadcast_to(rows, flat_pos.shape), flat_pos), flat_grad)
    return grad_input.reshape(input_shape)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"dense expects (B, F) input, got shape {x.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense expects {weight.shape[1]} input features, got {x.shape[1]}")
    return x @ weight.T + bias


def dense_backward(grad_out: Tensor, x: Tensor, weight: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    return grad_out @ weight, grad_out.T @ x, grad_out.sum(axis=0)


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    # subgradient 0 at x == 0
    return grad_out * (x > 0)


def dropout(
    x: Tensor,
    rate: float,
    mode: str = TRAIN,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> Tuple[Tensor, Optional[Tensor]]:
    """Inverted dropout. Returns ``(out, mask)``; ``mask`` is None when the op is identity."""
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in (TRAIN, INFER):
        raise ArgumentError(f"dropout mode must be {TRAIN} or {INFER}, got {mode}")
    if mode == INFER or rate == 0.0:
        return x, None
    rng = rng if rng is not None else np.random.default_rng(seed)
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


# ---------------------------------------------------------------------------
# Layer objects
# ---------------------------------------------------------------------------


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: Dict[str, Tensor] = {}
        self.grads: Dict[str, Tensor] = {}

    def apply(self, x: Tensor) -> Tensor:
        """Inference-mode output without caching anything on the layer."""
        raise NotImplementedError

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor) -> Tensor:
        raise NotImplementedError

    def output_shape(self, shape: Shape) -> Shape:
        """Shape of one example's output (batch dimension excluded)."""
        return shape

    def config(self) -> Dict[str, Any]:
        return {"kind": self.kind}

    def init_params(self, rng: np.random.Generator, scheme: str = "he") -> None:
        pass

    def astype(self, dtype) -> "Layer":
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return self

    @property
    def num_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.config().items() if k != "kind")
        return f"{type(self).__name__}({args})"


def he_normal(rng: np.random.Generator, shape: Shape, fan_in: int) -> Tensor:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def glorot_uniform(rng: np.random.Generator, shape: Shape, fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1):
        super().__init__()
        if stride < 1:
            raise ArgumentError(f"stride must be >= 1, got {stride}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.params = {
            "weight": np.zeros((out_channels, in_channels, kernel_size)),
            "bias": np.zeros(out_channels),
        }
        self._x: Optional[Tensor] = None

    def init_params(self, rng, scheme="he"):
        fan_in = self.in_channels * self.kernel_size
        fan_out = self.out_channels * self.kernel_size
        shape = self.params["weight"].shape
        dtype = self.params["weight"].dtype
        if scheme == "glorot":
            w = glorot_uniform(rng, shape, fan_in, fan_out)
        else:
            w = he_normal(rng, shape, fan_in)
        self.params["weight"] = w.astype(dtype)
        self.params["bias"] = np.zeros(self.out_channels, dtype=dtype)

    def apply(self, x):
        return conv1d(x, self.params["weight"], self.params["bias"], self.stride)

    def forward(self, x, train=False):
        self._x = x
        return conv1d(x, self.params["weight"], self.params["bias"], self.stride)

    def backward(self, grad):
        dx, dw, db = conv1d_backward(grad, self._x, self.params["weight"], self.stride)
        self.grads = {"weight": dw, "bias": db}
        return dx

    def output_shape(self, shape):
        if len(shape) != 2:
            raise ShapeError(f"conv1d expects (channels, length), got {shape}")
        channels, length = shape
        if channels != self.in_channels:
            raise ShapeError(f"conv1d expects {self.in_channels} channels, got {channels}")
        return self.out_channels, conv1d_output_length(length, self.kernel_size, self.stride)

    def config(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
        }


class MaxPool1d(Layer):
    kind = "maxpool1d"

    def __init__(self, width: int, stride: Optional[int] = None):
        super().__init__()
        self.width = width
        self.stride = width if stride is None else stride
        if self.stride < 1 or width < 1:
            raise ArgumentError(f"pool width and stride must be >= 1, got {width}/{self.stride}")
        self._argmax: Optional[Tensor] = None
        self._shape: Optional[Shape] = None

    def apply(self, x):
        return maxpool1d(x, self.width, self.stride)[0]

    def forward(self, x, train=False):
        self._shape = x.shape
        out, self._argmax = maxpool1d(x, self.width, self.stride)
        return out

    def backward(self, grad):
        return maxpool1d_backward(grad, self._argmax, self._shape, self.width, self.stride)

    def output_shape(self, shape):
        channels, length = shape
        if self.width > length:
            raise ShapeError(f"pool width {self.width} exceeds input length {length}")
        return channels, (length - self.width) // self.stride + 1

    def config(self):
        return {"kind": self.kind, "width": self.width, "stride": self.stride}


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.params = {
            "weight": np.zeros((out_features, in_features)),
            "bias": np.zeros(out_features),
        }
        self._x: Optional[Tensor] = None

    def init_params(self, rng, scheme="he"):
        shape = self.params["weight"].shape
        dtype = self.params["weight"].dtype
        if scheme == "glorot":
            w = glorot_uniform(rng, shape, self.in_features, self.out_features)
        else:
            w = he_normal(rng, shape, self.in_features)
        self.params["weight"] = w.astype(dtype)
        self.params["bias"] = np.zeros(self.out_features, dtype=dtype)

    def apply(self, x):
        return dense(x, self.params["weight"], self.params["bias"])

    def forward(self, x, train=False):
        self._x = x
        return dense(x, self.params["weight"], self.params["bias"])

    def backward(self, grad):
        dx, dw, db = dense_backward(grad, self._x, self.params["weight"])
        self.grads = {"weight": dw, "bias": db}
        return dx

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise ShapeError(f"dense expects ({self.in_features},) features, got {shape}")
        return (self.out_features,)

    def config(self):
        return {
            "kind": self.kind,
            "in_features": self.in_features,
            "out_features": self.out_features,
        }


class ReLU(Layer):
    kind = "relu"

    def apply(self, x):
        return relu(x)

    def forward(self, x, train=False):
        self._x = x
        return relu(x)

    def backward(self, grad):
        return relu_backward(grad, self._x)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate: float = 0.5, seed: int = 0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ArgumentError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._mask: Optional[Tensor] = None

    def reseed(self, seed: int) -> None:
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def apply(self, x):
        return x

    def forward(self, x, train=False):
        out, self._mask = dropout(x, self.rate, TRAIN if train else INFER, rng=self.rng)
        return out

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask

    def config(self):
        return {"kind": self.kind, "rate": self.rate, "seed": self.seed}


class Flatten(Layer):
    kind = "flatten"

    def apply(self, x):
        return x.reshape(x.shape[0], -1)

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


LAYER_KINDS = {
    cls.kind: cls for cls in (Conv1d, MaxPool1d, Dense, ReLU, Dropout, Flatten)
}


def layer_from_config(config: Dict[str, Any]) -> Layer:
    config = dict(config)
    kind = config.pop("kind")
    if kind not in LAYER_KINDS:
        raise ArgumentError(f"unknown layer kind {kind!r}")
    return LAYER_KINDS[kind](**config)


class Sequential:
    """Ordered layer stack; parameters are addressed as ``"<index>.<name>"``."""

    def __init__(self, layers: Sequence[Layer]):
        self.layers: List[Layer] = list(layers)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, train=train)
            check_finite(x, f"output of layer {i} ({layer.kind})")
        return x

    def infer(self, x: Tensor) -> Tensor:
        """Stateless inference pass; safe to call from several threads."""
        for i, layer in enumerate(self.layers):
            x = layer.apply(x)
            check_finite(x, f"output of layer {i} ({layer.kind})")
        return x

    def backward(self, grad: Tensor) -> Tensor:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def output_shape(self, shape: Shape) -> Shape:
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(tuple(shape))
            except ShapeError as e:
                raise ShapeError(f"layer {i} ({layer.kind}): {e}") from e
        return tuple(shape)

    def shapes(self, shape: Shape) -> List[Shape]:
        out = []
        for layer in self.layers:
            shape = layer.output_shape(tuple(shape))
            out.append(shape)
        return out

    def named_params(self) -> Dict[str, Tensor]:
        return {
            f"{i}.{name}": value
            for i, layer in enumerate(self.layers)
            for name, value in layer.params.items()
        }

    def named_grads(self) -> Dict[str, Tensor]:
        return {
            f"{i}.{name}": value
            for i, layer in enumerate(self.layers)
            for name, value in layer.grads.items()
        }

    def load_params(self, params: Dict[str, Tensor]) -> None:
        expected = self.named_params()
        missing = set(expected) - set(params)
        if missing:
            raise ShapeError(f"missing parameters: {', '.join(sorted(missing))}")
        for key, value in params.items():
            index, name = key.split(".", 1)
            layer = self.layers[int(index)]
            if layer.params[name].shape != value.shape:
                raise ShapeError(
                    f"parameter {key} has shape {value.shape}, expected {layer.params[name].shape}"
                )
            layer.params[name] = value

    def astype(self, dtype) -> "Sequential":
        for layer in self.layers:
            layer.astype(dtype)
        return self

    @property
    def num_params(self) -> int:
        return sum(layer.num_params for layer in self.layers)
