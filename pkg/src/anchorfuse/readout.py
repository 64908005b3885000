"""MLP readout trained on fused representations.

The network is ``input -> [Linear -> ReLU -> Dropout] x H -> Linear`` with
either a single logit (sigmoid cross-entropy) or K logits (softmax
cross-entropy with per-class weights). Training is plain numpy with Adam,
mini-batches, and early stopping on a validation metric.
"""

from __future__ import annotations

import copy
import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .binio import Reader, Writer
from .errors import DegenerateLabels, DimensionError, FormatError, InvalidConfig, InvalidInput, TrainingDiverged
from .metrics import f1_for_class, macro_f1
from .numeric import StandardScaler, as_matrix, make_rng

BINARY = "binary_logit"
SOFTMAX = "softmax_K"
HEADS = (BINARY, SOFTMAX)

RDOT_MAGIC = b"RDOT"
RDOT_VERSION = 1
_HEAD_CODES = {BINARY: 1, SOFTMAX: 2}


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    class_weights: Sequence[float] | None = None
    seed: int = 0
    hidden: tuple[int, ...] = (256, 256, 256)
    dropout: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    zero_init_output: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise InvalidConfig("learning_rate, batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise InvalidConfig("patience cannot exceed max_epochs")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig("dropout must be in [0, 1)")
        if self.class_weights is not None and any(w <= 0 for w in self.class_weights):
            raise InvalidConfig("class weights must be positive")


@dataclass
class ReadoutModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = BINARY
    dropout_rate: float = 0.5
    threshold: float = 0.5
    train_seed: int = 0
    input_scaler: StandardScaler | None = None
    history: list[dict] = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if self.head not in HEADS:
            raise InvalidConfig(f"unknown head {self.head!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidConfig("need one bias per weight matrix and at least one layer")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise DimensionError("consecutive layer shapes do not chain")
        if self.head == BINARY and self.weights[-1].shape[1] != 1:
            raise InvalidConfig("binary head must have exactly one output")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return 2 if self.head == BINARY else self.weights[-1].shape[1]

    def logits(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        if X.shape[1] != self.input_dim:
            raise DimensionError(f"model expects {self.input_dim} features, got {X.shape[1]}")
        return _forward(self.weights, self.biases, X)[0]


@dataclass
class PredictionSet:
    ids: tuple[str, ...]
    true_labels: np.ndarray | None
    probabilities: np.ndarray
    predicted_labels: np.ndarray
    model_tag: str = ""
    threshold: float | None = None

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if self.probabilities.ndim == 1:
            self.probabilities = self.probabilities.reshape(-1, 1)
        self.predicted_labels = np.asarray(self.predicted_labels, dtype=np.int64)
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        n = len(self.ids)
        if self.probabilities.shape[0] != n or self.predicted_labels.shape[0] != n:
            raise DimensionError("ids, probabilities and predicted labels differ in length")
        if self.true_labels is not None and self.true_labels.shape[0] != n:
            raise DimensionError("true labels differ in length from ids")

    @property
    def is_binary(self) -> bool:
        return self.probabilities.shape[1] == 1

    def class_probabilities(self) -> np.ndarray:
        """N x K probabilities; a binary set expands to ``[1 - p, p]``."""
        if self.is_binary:
            p = self.probabilities[:, 0]
            return np.column_stack([1.0 - p, p])
        return self.probabilities

    def p_true(self) -> np.ndarray:
        if self.true_labels is None:
            raise InvalidInput("prediction set has no true labels")
        probs = self.class_probabilities()
        return probs[np.arange(len(self.ids)), self.true_labels]

    def correct(self) -> np.ndarray:
        if self.true_labels is None:
            raise InvalidInput("prediction set has no true labels")
        return self.predicted_labels == self.true_labels


def _relu(x):
    return np.maximum(x, 0.0)


def _forward(weights, biases, X, masks=None):
    """Return logits plus the per-layer activations needed for backprop."""
    acts = [X]
    h = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = h @ W + b
        if i == last:
            return z, acts
        h = _relu(z)
        if masks is not None:
            h = h * masks[i]
        acts.append(h)
    raise AssertionError("unreachable")


def _sigmoid(s):
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradients(weights, biases, X, y, head: str, class_weights=None, masks=None):
    """Weighted cross-entropy and its gradients w.r.t. every weight and bias.

    The loss is ``sum_i w_{y_i} l_i / sum_i w_{y_i}``, so uniform class
    weights reproduce the unweighted mean exactly. ``masks`` are the
    already-scaled dropout masks for each hidden layer (None disables
    dropout).
    """
    y = np.asarray(y, dtype=np.int64)
    logits, acts = _forward(weights, biases, X, masks)
    if class_weights is None:
        sample_w = np.ones(len(y))
    else:
        # rescaling to max 1 leaves the normalized loss unchanged and makes uniform weights exactly 1
        cw = np.asarray(class_weights, dtype=np.float64)
        sample_w = (cw / cw.max())[y]
    norm = sample_w.sum()

    if head == BINARY:
        s = logits[:, 0]
        per = np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))
        dlogits = ((_sigmoid(s) - y) * sample_w / norm)[:, None]
    else:
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        per = -log_probs[np.arange(len(y)), y]
        dlogits = np.exp(log_probs)
        dlogits[np.arange(len(y)), y] -= 1.0
        dlogits *= (sample_w / norm)[:, None]
    loss = float((sample_w * per).sum() / norm)

    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    delta = dlogits
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            # acts[i] is post-ReLU (and post-mask); zero entries block the gradient
            delta = delta * (acts[i] > 0)
            if masks is not None:
                delta = delta * masks[i - 1]
    return loss, grads_w, grads_b


def init_network(dims: Sequence[int], rng: np.random.Generator, zero_output: bool = True):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        if zero_output and i == len(dims) - 2:
            W = np.zeros((fan_in, fan_out))
            b = np.zeros(fan_out)
        else:
            W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=fan_out)
        weights.append(W)
        biases.append(b)
    return weights, biases


def inverse_frequency_weights(labels, n_classes: int) -> np.ndarray:
    """Inverse class frequencies, normalized so present classes average 1."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes).astype(np.float64)
    weights = np.ones(n_classes)
    present = counts > 0
    weights[present] = 1.0 / counts[present]
    weights[present] /= weights[present].mean()
    return weights


def _validation_metric(head, logits, y) -> float:
    if head == BINARY:
        return f1_for_class(y, (_sigmoid(logits[:, 0]) >= 0.5).astype(int), 1)
    return macro_f1(y, np.argmax(logits, axis=1))


def train_readout(train, val, config: TrainConfig | None = None, head: str = BINARY, n_classes: int | None = None) -> ReadoutModel:
    """Train the MLP, keeping the weights of the best validation epoch.

    ``train`` and ``val`` are ``(matrix, labels)`` pairs. The validation
    metric is F1 at threshold 0.5 for a binary head and macro-F1 for a
    softmax head. Training stops after ``patience`` epochs without a
    strict improvement.
    """
    config = config or TrainConfig()
    if head in ("binary", BINARY):
        head = BINARY
    elif head in ("multiclass", SOFTMAX):
        head = SOFTMAX
    else:
        raise InvalidConfig(f"unknown head {head!r}")
    X = as_matrix(train[0], "train")
    y = np.asarray(train[1], dtype=np.int64)
    Xv = as_matrix(val[0], "val")
    yv = np.asarray(val[1], dtype=np.int64)
    if len(X) == 0 or len(Xv) == 0:
        raise InvalidInput("train and validation sets must be nonempty")
    if len(X) != len(y) or len(Xv) != len(yv):
        raise DimensionError("matrix and label lengths differ")
    if Xv.shape[1] != X.shape[1]:
        raise DimensionError("train and validation feature counts differ")
    if head == BINARY:
        n_classes = 2
    elif n_classes is None:
        n_classes = int(max(y.max(), yv.max())) + 1
    if y.min() < 0 or yv.min() < 0 or y.max() >= n_classes or yv.max() >= n_classes:
        raise InvalidInput(f"labels must lie in [0, {n_classes})")
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("training labels contain a single class")

    if config.class_weights is not None:
        class_weights = np.asarray(config.class_weights, dtype=np.float64)
        if class_weights.shape != (n_classes,):
            raise InvalidConfig(f"expected {n_classes} class weights")
    elif head == SOFTMAX:
        class_weights = inverse_frequency_weights(y, n_classes)
    else:
        class_weights = None

    rng = make_rng(config.seed, "readout")
    out_dim = 1 if head == BINARY else n_classes
    dims = [X.shape[1], *config.hidden, out_dim]
    weights, biases = init_network(dims, rng, config.zero_init_output)
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    keep = 1.0 - config.dropout
    step = 0

    best_metric = -np.inf
    best = (copy.deepcopy(weights), copy.deepcopy(biases))
    history = []
    stale = 0
    n = len(X)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = X[idx]
            masks = None
            if config.dropout > 0:
                masks = [(rng.random((len(idx), h)) < keep) / keep for h in config.hidden]
            loss, gw, gb = loss_and_gradients(weights, biases, xb, y[idx], head, class_weights, masks)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss * len(idx)
            step += 1
            c1 = 1.0 - config.beta1 ** step
            c2 = 1.0 - config.beta2 ** step
            for j, (p, g) in enumerate(zip(params, gw + gb)):
                m[j] *= config.beta1
                m[j] += (1.0 - config.beta1) * g
                v[j] *= config.beta2
                v[j] += (1.0 - config.beta2) * g * g
                p -= config.learning_rate * (m[j] / c1) / (np.sqrt(v[j] / c2) + config.adam_eps)

        metric = _validation_metric(head, _forward(weights, biases, Xv)[0], yv)
        history.append({"epoch": epoch, "train_loss": epoch_loss / n, "val_metric": metric})
        if metric > best_metric:
            best_metric = metric
            best = (copy.deepcopy(weights), copy.deepcopy(biases))
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    model = ReadoutModel(
        weights=best[0],
        biases=best[1],
        head=head,
        dropout_rate=config.dropout,
        threshold=0.5,
        train_seed=config.seed,
    )
    model.history = history
    return model


def predict(model: ReadoutModel, fused, ids: Sequence[str] | None = None, labels=None, tag: str = "") -> PredictionSet:
    """Run the network with dropout disabled and apply the decision rule.

    Binary: ``p = sigmoid(s)`` and label 1 iff ``p >= model.threshold``.
    Softmax: argmax, ties resolved to the lowest class index.
    """
    logits = model.logits(fused)
    n = logits.shape[0]
    ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(n))
    if model.head == BINARY:
        p = _sigmoid(logits[:, 0])
        return PredictionSet(ids, labels, p[:, None], (p >= model.threshold).astype(np.int64), tag, model.threshold)
    probs = _softmax(logits)
    return PredictionSet(ids, labels, probs, np.argmax(probs, axis=1), tag, None)


def sweep_threshold(probabilities, labels) -> tuple[float, float]:
    """Return ``(threshold, f1)`` maximizing validation F1.

    Candidates are the unique probabilities plus 0.5; ties go to the
    smallest threshold.
    """
    p = np.asarray(probabilities, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("validation labels contain a single class")
    best_t, best_f1 = None, -1.0
    for t in np.union1d(np.unique(p), [0.5]):
        score = f1_for_class(y, (p >= t).astype(int), 1)
        if score > best_f1:
            best_t, best_f1 = float(t), score
    return best_t, best_f1


def select_threshold(model: ReadoutModel, val) -> float:
    if model.head != BINARY:
        raise InvalidConfig("threshold selection applies to binary heads only")
    model.threshold = 0.5
    preds = predict(model, val[0])
    threshold, _ = sweep_threshold(preds.probabilities[:, 0], val[1])
    model.threshold = threshold
    return threshold


def encode_readout(model: ReadoutModel) -> bytes:
    w = Writer()
    w.raw(RDOT_MAGIC)
    w.u32(RDOT_VERSION)
    w.u8(_HEAD_CODES[model.head])
    dims = model.layer_dims
    w.u32(len(dims))
    for d in dims:
        w.u64(d)
    w.f64(model.dropout_rate)
    w.f64(model.threshold)
    w.u64(model.train_seed)
    for W, b in zip(model.weights, model.biases):
        w.array_f64(W)
        w.array_f64(b)
    w.u8(1 if model.input_scaler is not None else 0)
    if model.input_scaler is not None:
        w.scaler(model.input_scaler)
    return w.getvalue()


def decode_readout(data: bytes) -> ReadoutModel:
    r = Reader(data)
    r.expect_magic(RDOT_MAGIC, RDOT_VERSION)
    codes = {v: k for k, v in _HEAD_CODES.items()}
    code = r.u8()
    if code not in codes:
        raise FormatError(f"unknown head code {code}")
    n_dims = r.u32()
    if n_dims < 2:
        raise FormatError("readout needs at least input and output dims")
    dims = [r.u64() for _ in range(n_dims)]
    dropout, threshold, seed = r.f64(), r.f64(), r.u64()
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        weights.append(r.array(fan_in * fan_out, "<f8").reshape(fan_in, fan_out))
        biases.append(r.array(fan_out, "<f8"))
    scaler = r.scaler() if r.u8() else None
    if not r.at_end():
        raise FormatError("trailing bytes in readout file")
    return ReadoutModel(weights, biases, codes[code], dropout, threshold, seed, scaler)


def save_readout(model: ReadoutModel, path: str | os.PathLike):
    Path(path).write_bytes(encode_readout(model))


def load_readout(path: str | os.PathLike) -> ReadoutModel:
    return decode_readout(Path(path).read_bytes())


def write_predictions(preds: PredictionSet, path: str | os.PathLike):
    """Persist predictions at full double precision (17 significant digits)."""
    k = preds.probabilities.shape[1]
    prob_cols = ["p"] if k == 1 else [f"p_{j}" for j in range(k)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["id", "true_label", "predicted_label", *prob_cols])
        for i, rid in enumerate(preds.ids):
            true = "" if preds.true_labels is None else int(preds.true_labels[i])
            out.writerow([rid, true, int(preds.predicted_labels[i]), *(format(x, ".17g") for x in preds.probabilities[i])])


def read_predictions(path: str | os.PathLike, tag: str = "", threshold: float | None = None) -> PredictionSet:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty predictions file")
    header, body = rows[0], rows[1:]
    if header[:3] != ["id", "true_label", "predicted_label"]:
        raise FormatError(f"{path}: unexpected header {header}")
    ids = [r[0] for r in body]
    has_true = all(r[1] != "" for r in body)
    true = np.array([int(r[1]) for r in body], dtype=np.int64) if has_true else None
    pred = np.array([int(r[2]) for r in body], dtype=np.int64)
    probs = np.array([[float(x) for x in r[3:]] for r in body], dtype=np.float64).reshape(len(body), len(header) - 3)
    return PredictionSet(ids, true, probs, pred, tag, threshold)
