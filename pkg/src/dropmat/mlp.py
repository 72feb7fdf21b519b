"""Fully connected classifier trained with plain mini-batch gradient descent.

Everything is written directly against numpy: affine layers with a hidden
nonlinearity, a softmax output over the five ground materials, mean
cross-entropy loss and hand-derived backpropagation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from dropmat.errors import InvalidConfigError, InvalidInputError

N_INPUTS = 25
N_CLASSES = 5
MATERIALS: tuple[str, ...] = ("quilt", "carpet", "asphalt", "granite", "marble")

ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpModel:
    """Network parameters plus the input normalization learned from training data.

    ``weights[k]`` has shape ``(layer_dims[k + 1], layer_dims[k])``.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    activation: str = "relu"

    def __post_init__(self) -> None:
        self.layer_dims = [int(d) for d in self.layer_dims]
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        self.norm_mean = np.asarray(self.norm_mean, dtype=float).reshape(-1)
        self.norm_std = np.asarray(self.norm_std, dtype=float).reshape(-1)
        self.validate()

    def validate(self) -> None:
        dims = self.layer_dims
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise InvalidConfigError(f"invalid layer dimensions {dims}")
        if dims[0] != N_INPUTS or dims[-1] != N_CLASSES:
            raise InvalidConfigError(
                f"network must map {N_INPUTS} features to {N_CLASSES} classes, got {dims}"
            )
        if self.activation not in ACTIVATIONS:
            raise InvalidConfigError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise InvalidConfigError("one weight matrix and bias vector is needed per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[k + 1], dims[k]) or b.shape != (dims[k + 1],):
                raise InvalidConfigError(f"layer {k} parameters do not chain with {dims}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidConfigError(f"layer {k} has non-finite parameters")
        if self.norm_mean.shape != (N_INPUTS,) or self.norm_std.shape != (N_INPUTS,):
            raise InvalidConfigError("normalization statistics must have 25 entries")
        if not np.all(np.isfinite(self.norm_mean)) or not np.all(self.norm_std > 0):
            raise InvalidConfigError("normalization std entries must be positive")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> MlpModel:
        return MlpModel(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.norm_mean.copy(),
            self.norm_std.copy(),
            self.activation,
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    hidden_dims: tuple[int, ...] = (64, 32)
    activation: str = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidConfigError("learning_rate must be positive")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidConfigError("epochs must be a positive integer")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InvalidConfigError("batch_size must be a positive integer")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfigError(f"unknown activation {self.activation!r}")


@dataclass
class TrainReport:
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    train_seconds: float = 0.0
    epochs: int = 0


@dataclass
class ConfusionMatrix:
    """Counts with true labels on rows and predictions on columns."""

    counts: np.ndarray
    inference_seconds: float = 0.0

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def per_class_accuracy(self) -> np.ndarray:
        totals = self.row_totals
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, np.diag(self.counts) / np.maximum(totals, 1), np.nan)

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(float)
    return 1.0 - a * a


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-logit subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))


def init_model(cfg: TrainConfig, norm_mean=None, norm_std=None) -> MlpModel:
    """Draw weights from N(0, 1/fan_in) and zero the biases, seeded by ``cfg.seed``."""
    if len(cfg.hidden_dims) == 0:
        raise InvalidConfigError("at least one hidden layer is required")
    if any(d <= 0 for d in cfg.hidden_dims):
        raise InvalidConfigError(f"hidden layer sizes must be positive, got {cfg.hidden_dims}")
    dims = [N_INPUTS, *cfg.hidden_dims, N_CLASSES]
    rng = np.random.default_rng(cfg.seed)
    weights = [rng.normal(0.0, 1.0 / np.sqrt(dims[k]), size=(dims[k + 1], dims[k])) for k in range(len(dims) - 1)]
    biases = [np.zeros(dims[k + 1]) for k in range(len(dims) - 1)]
    return MlpModel(
        dims,
        weights,
        biases,
        np.zeros(N_INPUTS) if norm_mean is None else norm_mean,
        np.ones(N_INPUTS) if norm_std is None else norm_std,
        cfg.activation,
    )


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != N_INPUTS:
        raise InvalidInputError(f"expected {N_INPUTS} features per sample, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("input features must be finite")
    return x, single


def _forward(model: MlpModel, x: np.ndarray):
    """Return (logits, pre-activations, activations) for a 2-D batch."""
    a = (x - model.norm_mean) / model.norm_std
    acts = [a]
    pre = []
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre.append(z)
        if k < model.n_layers - 1:
            a = _activate(z, model.activation)
            acts.append(a)
    return pre[-1], pre, acts


def forward(model: MlpModel, x):
    """Class probabilities for one sample or a batch, plus the layer activations.

    Activations are listed input-first, starting with the normalized input and
    ending with the output probabilities.
    """
    xb, single = _as_batch(x)
    logits, _, acts = _forward(model, xb)
    probs = softmax(logits)
    layers = [*acts, probs]
    if single:
        return probs[0], [a[0] for a in layers]
    return probs, layers


def _check_labels(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise InvalidInputError("labels must be a 1-D sequence")
    if y.size and (not np.issubdtype(y.dtype, np.integer)):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise InvalidInputError("labels must be integers")
        y = y.astype(np.int64)
    if np.any((y < 0) | (y >= N_CLASSES)):
        raise InvalidInputError(f"labels must lie in 0..{N_CLASSES - 1}")
    if n is not None and y.shape[0] != n:
        raise InvalidInputError("feature and label counts differ")
    return y.astype(np.int64)


def loss_and_backward(model: MlpModel, x, y):
    """Mean softmax cross-entropy over a batch and its exact parameter gradients.

    Returns ``(loss, weight_grads, bias_grads)`` with gradients shaped like the
    model's parameters.
    """
    xb, _ = _as_batch(x)
    if xb.shape[0] == 0:
        raise InvalidInputError("batch is empty")
    y = _check_labels(y, xb.shape[0])
    m = xb.shape[0]
    logits, pre, acts = _forward(model, xb)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(m), y].mean())

    delta = np.exp(logp)
    delta[np.arange(m), y] -= 1.0
    delta /= m
    grads_w: list[np.ndarray] = [None] * model.n_layers  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * model.n_layers  # type: ignore[list-item]
    for k in range(model.n_layers - 1, -1, -1):
        grads_w[k] = delta.T @ acts[k]
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k]) * _activate_grad(pre[k - 1], acts[k], model.activation)
    return loss, grads_w, grads_b


def normalization_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and population std; zero spread is replaced by 1."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def _cross_entropy(model: MlpModel, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    logits, _, _ = _forward(model, x)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(x.shape[0]), y].mean())
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return loss, acc


def train(train_set, val_set, cfg: TrainConfig | None = None) -> tuple[MlpModel, TrainReport]:
    """Fit a fresh network on ``train_set`` and track validation loss/accuracy per epoch.

    Both sets are ``(features, labels)`` pairs. Normalization statistics come
    from the training features only.
    """
    cfg = cfg or TrainConfig()
    x_tr, _ = _as_batch(train_set[0])
    y_tr = _check_labels(train_set[1], x_tr.shape[0])
    x_va, _ = _as_batch(val_set[0])
    y_va = _check_labels(val_set[1], x_va.shape[0])
    if x_tr.shape[0] == 0 or x_va.shape[0] == 0:
        raise InvalidInputError("training and validation sets must be non-empty")

    mean, std = normalization_stats(x_tr)
    model = init_model(cfg, mean, std)
    # separate stream so shuffling does not depend on how many weights were drawn
    rng = np.random.default_rng([cfg.seed, 1])
    report = TrainReport()
    lr = cfg.learning_rate
    m = x_tr.shape[0]
    start = time.perf_counter()
    for _ in range(cfg.epochs):
        order = rng.permutation(m)
        epoch_loss = 0.0
        for lo in range(0, m, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            loss, gw, gb = loss_and_backward(model, x_tr[idx], y_tr[idx])
            epoch_loss += loss * idx.size
            for k in range(model.n_layers):
                model.weights[k] -= lr * gw[k]
                model.biases[k] -= lr * gb[k]
        report.train_loss.append(epoch_loss / m)
        v_loss, v_acc = _cross_entropy(model, x_va, y_va)
        report.val_loss.append(v_loss)
        report.val_accuracy.append(v_acc)
    report.train_seconds = time.perf_counter() - start
    report.epochs = cfg.epochs
    model.validate()
    return model, report


def predict(model: MlpModel, x):
    """Label (argmax, lowest index on ties) and probabilities for one sample or a batch."""
    probs, _ = forward(model, x)
    if probs.ndim == 1:
        return int(np.argmax(probs)), probs
    return np.argmax(probs, axis=1), probs


def evaluate(model: MlpModel, test_set) -> ConfusionMatrix:
    x, _ = _as_batch(test_set[0])
    y = _check_labels(test_set[1], x.shape[0])
    if x.shape[0] == 0:
        raise InvalidInputError("test set is empty")
    start = time.perf_counter()
    labels, _ = predict(model, x)
    elapsed = time.perf_counter() - start
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (y, labels), 1)
    return ConfusionMatrix(counts, elapsed)
