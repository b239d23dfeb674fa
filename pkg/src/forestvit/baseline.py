"""Multinomial logistic regression on flattened pixel intensities.

The model is logits = x.W + b trained with minibatch gradient descent on the
mean cross-entropy. The gradient uses the closed form (softmax(z) - onehot(y))
outer x; tests confirm it against finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError

log = logging.getLogger(__name__)


@dataclass
class LrParams:
    """Weights (num_features x num_classes) and per-class biases."""

    W: np.ndarray
    b: np.ndarray

    def named(self) -> dict:
        return {"lr.weight": self.W, "lr.bias": self.b}


def init_lr_params(num_features: int, num_classes: int = 4) -> LrParams:
    """Zero initialization; the objective is convex so zeros are canonical."""
    return LrParams(W=np.zeros((num_features, num_classes)),
                    b=np.zeros(num_classes))


def flatten(image: np.ndarray) -> np.ndarray:
    """HxWx3 image -> length H*W*3 vector, row-major with channels last."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected HxWx3 image, got shape {img.shape}")
    return img.reshape(-1)


def unflatten(vec: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inverse of flatten."""
    return np.asarray(vec, dtype=np.float64).reshape(height, width, 3)


def lr_forward(x: np.ndarray, params: LrParams) -> np.ndarray:
    """Feature vector (or batch of rows) -> raw logits."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x.reshape(1, -1) if single else x
    if rows.shape[1] != params.W.shape[0]:
        raise ShapeError(f"feature length {rows.shape[1]} does not match "
                         f"weight rows {params.W.shape[0]}")
    logits = rows @ params.W + params.b
    return logits[0] if single else logits


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def mean_cross_entropy(features: np.ndarray, labels: np.ndarray,
                       params: LrParams) -> float:
    z = lr_forward(features, params)
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    return float((lse - z[np.arange(len(labels)), labels]).mean())


def lr_gradient(features: np.ndarray, labels: np.ndarray,
                params: LrParams) -> tuple:
    """Closed-form gradient of mean cross-entropy: ((softmax - onehot)/n) pulled
    back through the linear map."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    z = lr_forward(features, params)
    s = _softmax_rows(z)
    s[np.arange(n), labels] -= 1.0
    s /= n
    return features.T @ s, s.sum(axis=0)


def train_lr(features: np.ndarray, labels: np.ndarray, lr: float, epochs: int,
             seed: int, batch_size: int = 32, num_classes: int = 4):
    """Minibatch gradient descent; returns (params, per-epoch mean loss list).

    Minibatches follow a seeded shuffle that is re-drawn each epoch, so runs
    are reproducible bit for bit.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise DataError("training set is empty")
    if features.shape[0] != labels.shape[0]:
        raise ShapeError(f"{features.shape[0]} feature rows vs {labels.shape[0]} labels")
    if lr < 0:
        raise ConfigError("learning rate must be non-negative")
    n = features.shape[0]
    params = init_lr_params(features.shape[1], num_classes)
    losses = []
    for epoch in range(epochs):
        order = np.random.Generator(np.random.Philox(key=[seed, epoch])).permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            gw, gb = lr_gradient(features[idx], labels[idx], params)
            params.W -= lr * gw
            params.b -= lr * gb
        loss = mean_cross_entropy(features, labels, params)
        losses.append(loss)
        log.debug("epoch %d: train loss %.6f", epoch, loss)
    return params, losses


def predict(features: np.ndarray, params: LrParams) -> np.ndarray:
    """Argmax class index per row (or a scalar for a single vector)."""
    z = lr_forward(features, params)
    return np.argmax(z, axis=-1)
