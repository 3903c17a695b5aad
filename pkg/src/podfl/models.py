"""Flat-parameter classifiers trained with plain minibatch SGD.

Every model is a single float64 vector, so clients, clusters, and the
server all exchange one currency and aggregation is a weighted sum of
arrays. Two families are supported: multinomial logistic regression and
a one-hidden-layer tanh network. Gradients are exact analytic batch
averages, which keeps local training deterministic for a fixed seed and
makes finite-difference checks meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyShardError

LOGISTIC = "logistic-regression"
MLP = "mlp-one-hidden"
MODEL_KINDS = (LOGISTIC, MLP)

METRICS = ("cosine", "l2")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; fixes the length of the parameter vector.

    ``hidden_dim`` must be 0 for logistic regression and positive for the
    one-hidden-layer network.
    """

    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(
                f"model.kind: unknown kind {self.kind!r}, expected one of {MODEL_KINDS}"
            )
        if self.input_dim < 1:
            raise ConfigError(f"model.input_dim: must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ConfigError(f"model.num_classes: must be >= 2, got {self.num_classes}")
        if self.kind == MLP and self.hidden_dim < 1:
            raise ConfigError(f"model.hidden_dim: must be >= 1 for {MLP}, got {self.hidden_dim}")
        if self.kind == LOGISTIC and self.hidden_dim != 0:
            raise ConfigError(f"model.hidden_dim: must be 0 for {LOGISTIC}, got {self.hidden_dim}")

    @property
    def param_count(self) -> int:
        d, c, h = self.input_dim, self.num_classes, self.hidden_dim
        if self.kind == LOGISTIC:
            return d * c + c
        return d * h + h + h * c + c


@dataclass(frozen=True)
class TrainConfig:
    """Local-training hyperparameters used by every client."""

    local_epochs: int = 3
    learning_rate: float = 0.1
    batch_size: int = 32

    def __post_init__(self):
        if self.local_epochs < 1:
            raise ConfigError(f"train.local_epochs: must be >= 1, got {self.local_epochs}")
        if not self.learning_rate >= 0.0:
            raise ConfigError(f"train.learning_rate: must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size: must be >= 1, got {self.batch_size}")


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Seeded small-Gaussian initial parameter vector (symmetry breaking for the MLP)."""
    rng = np.random.default_rng(seed)
    return 0.01 * rng.standard_normal(spec.param_count)


def _unpack_logistic(spec, w):
    d, c = spec.input_dim, spec.num_classes
    weight = w[: d * c].reshape(d, c)
    bias = w[d * c :]
    return weight, bias


def _unpack_mlp(spec, w):
    d, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    off = 0
    w1 = w[off : off + d * h].reshape(d, h)
    off += d * h
    b1 = w[off : off + h]
    off += h
    w2 = w[off : off + h * c].reshape(h, c)
    off += h * c
    b2 = w[off:]
    return w1, b1, w2, b2


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _loss_grad_arrays(spec: ModelSpec, w: np.ndarray, features: np.ndarray, labels: np.ndarray):
    if w.shape != (spec.param_count,):
        raise ConfigError(
            f"parameter vector length {w.shape} does not match spec ({spec.param_count},)"
        )
    if features.ndim != 2 or features.shape[1] != spec.input_dim:
        raise ConfigError(
            f"feature matrix shape {features.shape} does not match input_dim {spec.input_dim}"
        )
    if features.shape[0] == 0:
        raise EmptyShardError("cannot evaluate loss on an empty batch")
    n = features.shape[0]
    rows = np.arange(n)

    if spec.kind == LOGISTIC:
        weight, bias = _unpack_logistic(spec, w)
        logits = features @ weight + bias
        logp = _log_softmax(logits)
        loss = -logp[rows, labels].mean()
        gz = np.exp(logp)
        gz[rows, labels] -= 1.0
        gz /= n
        grad = np.concatenate([(features.T @ gz).ravel(), gz.sum(axis=0)])
        return float(loss), grad

    w1, b1, w2, b2 = _unpack_mlp(spec, w)
    hidden = np.tanh(features @ w1 + b1)
    logits = hidden @ w2 + b2
    logp = _log_softmax(logits)
    loss = -logp[rows, labels].mean()
    gz = np.exp(logp)
    gz[rows, labels] -= 1.0
    gz /= n
    gw2 = hidden.T @ gz
    gb2 = gz.sum(axis=0)
    ghidden = (gz @ w2.T) * (1.0 - hidden * hidden)
    gw1 = features.T @ ghidden
    gb1 = ghidden.sum(axis=0)
    grad = np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])
    return float(loss), grad


def loss_and_grad(spec: ModelSpec, w: np.ndarray, batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss over ``batch`` and its exact gradient at ``w``.

    ``batch`` is anything exposing ``features`` (n, input_dim) and integer
    ``labels`` (n,), e.g. a :class:`podfl.data.Dataset`.
    """
    return _loss_grad_arrays(spec, w, batch.features, batch.labels)


def predict(spec: ModelSpec, w: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Argmax class predictions for a feature matrix."""
    if spec.kind == LOGISTIC:
        weight, bias = _unpack_logistic(spec, w)
        logits = features @ weight + bias
    else:
        w1, b1, w2, b2 = _unpack_mlp(spec, w)
        logits = np.tanh(features @ w1 + b1) @ w2 + b2
    return logits.argmax(axis=1)


def accuracy(spec: ModelSpec, w: np.ndarray, batch) -> float:
    return float((predict(spec, w, batch.features) == batch.labels).mean())


def client_update(spec: ModelSpec, w_t: np.ndarray, shard, cfg: TrainConfig, seed: int) -> np.ndarray:
    """Local SGD pass: ``local_epochs`` epochs of minibatch steps starting from ``w_t``.

    Each epoch visits the shard once in a fresh without-replacement order
    drawn from a generator seeded with ``seed``, sliced into consecutive
    batches of ``batch_size`` (the last batch may be short). The update is
    fully determined by ``(w_t, shard, cfg, seed)``; ``w_t`` itself is not
    modified.
    """
    features, labels = shard.features, shard.labels
    n = features.shape[0]
    if n == 0:
        raise EmptyShardError("client shard is empty")
    rng = np.random.default_rng(seed)
    w = w_t.copy()
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grad = _loss_grad_arrays(spec, w, features[idx], labels[idx])
            w -= cfg.learning_rate * grad
    return w


def model_distance(a: np.ndarray, b: np.ndarray, metric: str = "l2") -> float:
    """Distance between two parameter vectors under ``cosine`` or ``l2``.

    Cosine distance is ``1 - cos_similarity`` and lies in [0, 2]; it is
    undefined when either vector is all-zero.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if metric == "l2":
        return float(np.linalg.norm(a - b))
    aa = float(np.dot(a, a))
    bb = float(np.dot(b, b))
    if aa == 0.0 or bb == 0.0:
        raise ValueError("cosine distance is undefined for a zero vector")
    if np.array_equal(a, b):
        return 0.0
    cos = float(np.dot(a, b)) / math.sqrt(aa * bb)
    cos = min(1.0, max(-1.0, cos))
    return 1.0 - cos


def functionally_equivalent(a: np.ndarray, b: np.ndarray, eps: float, metric: str = "l2") -> bool:
    """True when the two models are within ``eps`` of each other (boundary inclusive)."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    return model_distance(a, b, metric) <= eps
