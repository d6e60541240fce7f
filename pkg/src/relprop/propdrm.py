"""One-hidden-layer network trained on sparse propositionalized rows.

    p = sigmoid(ELU(dropout(X W1 + b1)) Wo + bo)

Dropout acts on the affine pre-activation (inverted scaling, training
only).  Rows are densified one batch at a time, so working memory is
bs * d entries plus the parameters.  More than two classes switch the head
to a softmax with categorical cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, softmax

from .wordify import SparseBinaryMatrix

EPS = 1e-12
CHECKPOINT_MAGIC = "relprop-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DrmConfig:
    hidden: int = 64
    dropout: float = 0.2
    learning_rate: float = 0.2
    epochs: int = 10
    batch_size: int = 32
    elu_c: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden < 1 or self.batch_size < 1 or self.epochs < 0 or self.elu_c <= 0:
            raise ValueError(f"invalid PropDRM config: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class MlpModel:
    W1: np.ndarray  # (d, h)
    b1: np.ndarray  # (h,)
    Wo: np.ndarray  # (h, 1) binary, (h, C) otherwise
    bo: np.ndarray
    elu_c: float = 1.0
    dropout: float = 0.0
    classes: tuple[str, ...] = ("0", "1")
    loss_history: list[float] = field(default_factory=list)

    PARAMS = ("W1", "b1", "Wo", "bo")

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[0]

    @property
    def binary(self) -> bool:
        return self.Wo.shape[1] == 1

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.PARAMS}

    def copy(self) -> "MlpModel":
        return MlpModel(
            *(getattr(self, k).copy() for k in self.PARAMS),
            elu_c=self.elu_c,
            dropout=self.dropout,
            classes=self.classes,
            loss_history=list(self.loss_history),
        )

    # Checkpoint: versioned header, then each tensor as "name rows cols" followed
    # by its row-major values, one matrix row per line.
    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
            fh.write("classes\t" + "\t".join(self.classes) + "\n")
            fh.write(f"elu_c {self.elu_c!r}\ndropout {self.dropout!r}\n")
            for name in self.PARAMS:
                a = np.atleast_2d(getattr(self, name)) if getattr(self, name).ndim == 1 else getattr(self, name)
                fh.write(f"{name} {a.shape[0]} {a.shape[1]}\n")
                for row in a:
                    fh.write(" ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def read(cls, path) -> "MlpModel":
        with open(path, encoding="utf-8") as fh:
            magic, version = fh.readline().split()
            if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} MLP checkpoint")
            classes = tuple(fh.readline().rstrip("\n").split("\t")[1:])
            elu_c = float(fh.readline().split()[1])
            dropout = float(fh.readline().split()[1])
            tensors = {}
            for _ in cls.PARAMS:
                name, r, c = fh.readline().split()
                rows = [[float(x) for x in fh.readline().split()] for _ in range(int(r))]
                a = np.array(rows, dtype=np.float64).reshape(int(r), int(c))
                tensors[name] = a[0] if name in ("b1", "bo") else a
        return cls(**tensors, elu_c=elu_c, dropout=dropout, classes=classes)


def elu(x, c: float = 1.0):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x < 0, c * np.expm1(np.minimum(x, 0.0)), x)
    return out if out.ndim else float(out)


def _elu_grad(x: np.ndarray, c: float) -> np.ndarray:
    return np.where(x < 0, c * np.exp(np.minimum(x, 0.0)), 1.0)


def initialize(n_inputs: int, cfg: DrmConfig, classes: Sequence[str] = ("0", "1")) -> MlpModel:
    rng = np.random.default_rng(cfg.seed)
    n_out = 1 if len(classes) <= 2 else len(classes)

    def glorot(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return MlpModel(
        glorot(n_inputs, cfg.hidden),
        np.zeros(cfg.hidden),
        glorot(cfg.hidden, n_out),
        np.zeros(n_out),
        elu_c=cfg.elu_c,
        dropout=cfg.dropout,
        classes=tuple(classes),
    )


class BatchBuilder:
    """Densifies CSR rows one batch at a time and records every allocation."""

    def __init__(self, matrix: SparseBinaryMatrix) -> None:
        self.matrix = matrix
        self.allocations: list[int] = []

    def dense(self, rows: Sequence[int]) -> np.ndarray:
        m = self.matrix
        out = np.zeros((len(rows), m.n_cols))
        self.allocations.append(out.size)
        for k, i in enumerate(rows):
            out[k, m.indices[m.offsets[i] : m.offsets[i + 1]]] = 1.0
        return out


def forward(model: MlpModel, X: np.ndarray, training: bool = False, rng: np.random.Generator | None = None):
    """Class-1 probabilities (binary) or class probabilities, plus cached activations."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise ValueError(f"expected input of width {model.n_inputs}, got shape {X.shape}")
    Z1 = X @ model.W1 + model.b1
    mask = None
    if training and model.dropout > 0:
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        keep = 1.0 - model.dropout
        mask = (rng.random(Z1.shape) < keep) / keep
        D = Z1 * mask
    else:
        D = Z1
    H = elu(D, model.elu_c)
    Z2 = H @ model.Wo + model.bo
    if model.binary:
        P = np.clip(expit(Z2[:, 0]), EPS, 1 - EPS)
    else:
        P = np.clip(softmax(Z2, axis=1), EPS, 1 - EPS)
    cache = {"X": X, "D": D, "H": H, "mask": mask}
    return P, cache


def bce_loss(probs, targets) -> float:
    """Mean over instances of -sum_j y_ij log p_ij (binary: two-column form)."""
    p = np.clip(np.asarray(probs, dtype=np.float64), EPS, 1 - EPS)
    y = np.asarray(targets, dtype=np.float64)
    if p.ndim == 1:
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
    return float(-np.mean(np.sum(y * np.log(p), axis=1)))


def _one_hot(labels: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((len(labels), n))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def backward(model: MlpModel, probs: np.ndarray, cache: dict, labels: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the mean batch loss with respect to every parameter."""
    n = len(labels)
    if model.binary:
        dZ2 = ((probs - labels) / n)[:, None]
    else:
        dZ2 = (probs - _one_hot(labels, len(model.classes))) / n
    H, D, X = cache["H"], cache["D"], cache["X"]
    grads = {"Wo": H.T @ dZ2, "bo": dZ2.sum(axis=0)}
    dD = (dZ2 @ model.Wo.T) * _elu_grad(D, model.elu_c)
    dZ1 = dD if cache["mask"] is None else dD * cache["mask"]
    grads["W1"] = X.T @ dZ1
    grads["b1"] = dZ1.sum(axis=0)
    return grads


def loss_and_grads(model: MlpModel, X: np.ndarray, labels, training: bool = False, rng=None):
    labels = np.asarray(labels)
    probs, cache = forward(model, X, training, rng)
    targets = labels if model.binary else _one_hot(labels, len(model.classes))
    return bce_loss(probs, targets), backward(model, probs, cache, labels)


def train(
    matrix: SparseBinaryMatrix,
    labels,
    cfg: DrmConfig = DrmConfig(),
    classes: Sequence[str] | None = None,
    builder: BatchBuilder | None = None,
) -> MlpModel:
    """Mini-batch SGD over shuffled rows; ``model.loss_history`` has per-epoch mean loss."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != matrix.n_rows:
        raise ValueError("labels must align with matrix rows")
    if len(np.unique(labels)) < 2:
        raise ValueError("training needs at least two distinct labels")
    if classes is None:
        classes = tuple(str(c) for c in range(int(labels.max()) + 1))
    model = initialize(matrix.n_cols, cfg, classes)
    rng = np.random.default_rng(cfg.seed)
    builder = builder or BatchBuilder(matrix)
    bs, lr = cfg.batch_size, cfg.learning_rate
    for _ in range(cfg.epochs):
        order = rng.permutation(matrix.n_rows)
        total = 0.0
        for start in range(0, len(order), bs):
            rows = order[start : start + bs]
            X = builder.dense(rows)
            loss, grads = loss_and_grads(model, X, labels[rows], training=True, rng=rng)
            total += loss * len(rows)
            for name, g in grads.items():
                getattr(model, name)[...] -= lr * g
            del X
        model.loss_history.append(total / matrix.n_rows)
    return model


def predict_proba(model: MlpModel, matrix: SparseBinaryMatrix, rows: Sequence[int] | None = None, batch_size: int = 256):
    rows = np.arange(matrix.n_rows) if rows is None else np.asarray(rows)
    builder = BatchBuilder(matrix)
    parts = [forward(model, builder.dense(rows[i : i + batch_size]))[0] for i in range(0, len(rows), batch_size)]
    if not parts:
        return np.zeros(0) if model.binary else np.zeros((0, len(model.classes)))
    return np.concatenate(parts)


def predict(model: MlpModel, matrix: SparseBinaryMatrix, rows: Sequence[int] | None = None):
    """Labels and scores; binary label is 1 iff score >= 0.5."""
    scores = predict_proba(model, matrix, rows)
    if model.binary:
        return (scores >= 0.5).astype(np.int64), scores
    return scores.argmax(axis=1), scores
