"""Small multilayer perceptrons trained with plain mini-batch SGD.

Parameters are kept as one flat vector.  The canonical flattening is, per
layer, the ``(fan_in, fan_out)`` weight matrix in row-major order followed by
the bias vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _core, _kernels_py
from .linalg import DimensionError, DomainError


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class ModelArch:
    layer_sizes: tuple
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise DomainError(f"invalid layer sizes {sizes}")
        if sizes[-1] < 2:
            raise DomainError("need at least two output classes")
        if self.activation not in ("relu", "identity"):
            raise DomainError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_params(self):
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def num_classes(self):
        return self.layer_sizes[-1]


@dataclass
class Model:
    arch: ModelArch
    params: np.ndarray

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (self.arch.n_params,):
            raise DimensionError(f"expected {self.arch.n_params} params, got {self.params.shape}")

    def copy(self):
        return Model(self.arch, self.params.copy())

    def with_params(self, params):
        return Model(self.arch, params)


def unflatten(arch, params):
    """Split a flat vector into ``[(W, b), ...]`` views."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (arch.n_params,):
        raise DimensionError(f"expected {arch.n_params} params, got {params.shape}")
    out = []
    pos = 0
    for fi, fo in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        W = params[pos:pos + fi * fo].reshape(fi, fo)
        pos += fi * fo
        b = params[pos:pos + fo]
        pos += fo
        out.append((W, b))
    return out


def flatten(layers):
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in layers])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 2
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.learning_rate < 10:
            raise DomainError("learning rate must lie in [0, 10)")
        if self.epochs < 0 or self.batch_size < 1:
            raise DomainError("epochs must be >= 0 and batch_size >= 1")


def init_model(arch, seed):
    """He-style init: weights ~ N(0, 2 / fan_in), biases zero."""
    rng = np.random.default_rng([seed, 0x1417])
    layers = []
    for fi, fo in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        W = rng.standard_normal((fi, fo)) * math.sqrt(2.0 / fi)
        layers.append((W, np.zeros(fo)))
    return Model(arch, flatten(layers))


def logits(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.arch.input_dim:
        raise DimensionError(f"input dim {X.shape[-1]} != model input {model.arch.input_dim}")
    layers = unflatten(model.arch, model.params)
    h = X
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1 and model.arch.activation == "relu":
            h = np.maximum(h, 0.0)
    return h


def predict(model, X):
    # argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(logits(model, X), axis=1)


def loss_and_grad(model, X, y):
    """Mean softmax cross-entropy and its analytic gradient (flat)."""
    _check_data(model, X, y)
    return _kernels_py.batch_grad(
        model.params, model.arch.layer_sizes, model.arch.activation == "relu",
        np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.intp),
    )


def loss(model, X, y):
    z = logits(model, X)
    m = z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z - m).sum(axis=1)) + m[:, 0]
    return float(np.mean(lse - z[np.arange(len(y)), np.asarray(y)]))


def _check_data(model, X, y):
    if len(y) == 0:
        raise DomainError("empty dataset")
    if np.shape(X)[1] != model.arch.input_dim:
        raise DimensionError(f"input dim {np.shape(X)[1]} != model input {model.arch.input_dim}")
    if np.max(y) >= model.arch.num_classes:
        raise DimensionError("label exceeds model output size")


def train_epochs(global_model, data, cfg, kernels=None):
    """Run ``cfg.epochs`` epochs of SGD from ``global_model``.

    Returns the trained model and the mean batch loss of every epoch.
    """
    _check_data(global_model, data.X, data.y)
    k = kernels or _core
    params = global_model.params.copy()
    sizes = np.asarray(global_model.arch.layer_sizes, dtype=np.intp)
    relu = global_model.arch.activation == "relu"
    rng = np.random.default_rng([cfg.seed, 0x7EA1])
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data)).astype(np.intp)
        epoch_loss = k.sgd_epoch(params, sizes, relu, data.X, data.y, order, cfg.batch_size, cfg.learning_rate)
        if not math.isfinite(epoch_loss) or not np.all(np.isfinite(params)):
            raise DivergenceError(f"non-finite loss after epoch {len(history)}")
        history.append(float(epoch_loss))
    return Model(global_model.arch, params), history


def local_train(global_model, data, cfg):
    """Client-side training: ``W <- W - lr * grad`` over shuffled mini-batches."""
    model, _ = train_epochs(global_model, data, cfg)
    return model


def evaluate(model, data):
    """Fraction of samples whose argmax prediction equals the label."""
    if len(data) == 0:
        raise DomainError("empty dataset")
    return float(np.mean(predict(model, data.X) == data.y))
