"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from kws.nn.layers import Layer
from kws.nn.losses import softmax_cross_entropy


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(f: Callable[[], float], x: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        plus = f()
        flat[i] = saved - eps
        minus = f()
        flat[i] = saved
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def grad_check(
    layer: Layer, x: np.ndarray, eps: float = 1e-5, seed: int = 0
) -> float:
    """Max relative error between backward() and central differences over
    every input and parameter coordinate, for the scalar ``sum(forward(x) * R)``
    with a fixed random ``R``. Runs in float64 and in inference mode."""
    x = np.array(x, dtype=np.float64)
    layer.astype(np.float64)
    projection = np.random.default_rng(seed).standard_normal(layer.forward(x).shape)

    def objective() -> float:
        return float(np.sum(layer.forward(x) * projection))

    layer.forward(x)
    grad_x = layer.backward(projection)
    analytic = {name: g.copy() for name, g in layer.grads.items()}

    worst = float(relative_error(grad_x, numeric_gradient(objective, x, eps)).max())
    for name, value in layer.params.items():
        numeric = numeric_gradient(objective, value, eps)
        worst = max(worst, float(relative_error(analytic[name], numeric).max()))
    return worst


def loss_grad_check(
    logits: np.ndarray, labels: np.ndarray, eps: float = 1e-5
) -> float:
    logits = np.array(logits, dtype=np.float64)
    _, analytic = softmax_cross_entropy(logits, labels)

    def objective() -> float:
        return softmax_cross_entropy(logits, labels)[0]

    numeric = numeric_gradient(objective, logits, eps)
    return float(relative_error(analytic, numeric).max())
