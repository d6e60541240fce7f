"""Supervised co-embedding of relational items and class labels.

Items and labels share one d-dimensional space.  A bag is embedded as the
sum of its unique item vectors divided by sqrt(#unique), and classified as
the label with the largest dot product.  Training is plain per-instance SGD
on a margin ranking hinge against k sampled negative labels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .wordify import LABEL_PREFIX, InstanceBag, ItemVocabulary, label_token

log = logging.getLogger(__name__)

GRAD_CLIP = 10.0


@dataclass(frozen=True)
class StarTrainConfig:
    dim: int = 32
    epochs: int = 5
    learning_rate: float = 0.05
    negatives: int = 5
    margin: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.negatives < 1 or self.margin <= 0 or self.epochs < 0:
            raise ValueError(f"invalid PropStar config: {self}")


@dataclass
class EmbeddingModel:
    items: tuple[str, ...]
    item_vectors: np.ndarray  # (|W|, d)
    classes: tuple[str, ...]
    label_vectors: np.ndarray  # (|C|, d)
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._index = {s: i for i, s in enumerate(self.items)}

    @property
    def dim(self) -> int:
        return self.item_vectors.shape[1]

    def item_indices(self, items) -> np.ndarray:
        idx = self._index
        return np.array(sorted({idx[s] for s in items if s in idx}), dtype=np.int64)

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for name, vec in zip(self.items, self.item_vectors):
                fh.write(name + "\t" + "\t".join(repr(float(x)) for x in vec) + "\n")
            for name, vec in zip(self.classes, self.label_vectors):
                fh.write(label_token(name) + "\t" + "\t".join(repr(float(x)) for x in vec) + "\n")

    @classmethod
    def read_tsv(cls, path) -> "EmbeddingModel":
        items, ivec, classes, lvec = [], [], [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                name, *vals = line.rstrip("\n").split("\t")
                vec = [float(v) for v in vals]
                if name.startswith(LABEL_PREFIX):
                    classes.append(name[len(LABEL_PREFIX) :])
                    lvec.append(vec)
                else:
                    items.append(name)
                    ivec.append(vec)
        d = len(lvec[0])
        return cls(
            tuple(items),
            np.array(ivec, dtype=np.float64).reshape(len(items), d),
            tuple(classes),
            np.array(lvec, dtype=np.float64),
        )


@dataclass(frozen=True)
class BagEmbedding:
    vector: np.ndarray
    n_unique: int


def initialize(vocab: ItemVocabulary, classes: Sequence[str], cfg: StarTrainConfig) -> EmbeddingModel:
    rng = np.random.default_rng(cfg.seed)
    bound = 1.0 / (2 * cfg.dim)
    item_vectors = rng.uniform(-bound, bound, size=(len(vocab), cfg.dim))
    label_vectors = rng.uniform(-bound, bound, size=(len(classes), cfg.dim))
    return EmbeddingModel(tuple(vocab.items), item_vectors, tuple(classes), label_vectors)


def _embed(vectors: np.ndarray, idx: np.ndarray) -> np.ndarray:
    if len(idx) == 0:
        return np.zeros(vectors.shape[1])
    return vectors[idx].sum(axis=0) / np.sqrt(len(idx))


def embed_bag(model: EmbeddingModel, bag: InstanceBag | Sequence[str]) -> BagEmbedding:
    items = bag.items if isinstance(bag, InstanceBag) else bag
    idx = model.item_indices(items)
    if len(idx) == 0:
        log.debug("bag shares no items with the vocabulary")
    return BagEmbedding(_embed(model.item_vectors, idx), len(idx))


def pair_loss(model: EmbeddingModel, bag, pos_label: int, neg_labels: Sequence[int], margin: float) -> float:
    """Mean over negatives of max(0, margin - sim(bag, pos) + sim(bag, neg))."""
    if len(neg_labels) == 0:
        raise ValueError("need at least one negative label")
    e = embed_bag(model, bag).vector
    L = model.label_vectors
    terms = margin - e @ L[pos_label] + L[np.asarray(neg_labels)] @ e
    return float(np.maximum(terms, 0.0).mean())


def predict(model: EmbeddingModel, bag) -> tuple[int, np.ndarray]:
    """Label with the highest dot product (ties -> lowest index) and all scores."""
    scores = model.label_vectors @ embed_bag(model, bag).vector
    return int(np.argmax(scores)), scores


def predict_many(model: EmbeddingModel, bags: Sequence) -> tuple[np.ndarray, np.ndarray]:
    scores = np.array([predict(model, b)[1] for b in bags]).reshape(len(bags), len(model.classes))
    return scores.argmax(axis=1), scores


def _sample_negatives(rng: np.random.Generator, n_classes: int, pos: int, k: int) -> np.ndarray:
    others = np.array([c for c in range(n_classes) if c != pos])
    return rng.choice(others, size=k, replace=k > len(others))


def train(
    bags: Sequence[InstanceBag],
    vocab: ItemVocabulary,
    classes: Sequence[str],
    cfg: StarTrainConfig = StarTrainConfig(),
) -> EmbeddingModel:
    """SGD over (bag, true label) pairs with k negative labels per pair.

    Each update touches only the bag's unique item vectors, the positive
    label vector and the sampled negatives.  ``model.loss_history`` holds the
    mean pair loss of each epoch.
    """
    labels = {b.label for b in bags}
    if len(classes) < 2 or len(labels) < 2:
        raise ValueError("training needs at least two distinct labels")
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    model = initialize(vocab, classes, cfg)
    rng = np.random.default_rng(cfg.seed)
    V, L = model.item_vectors, model.label_vectors
    encoded = [(vocab.indices(b.items), b.label) for b in bags]
    k, lr, margin = cfg.negatives, cfg.learning_rate, cfg.margin

    for _ in range(cfg.epochs):
        total = 0.0
        for n in rng.permutation(len(encoded)):
            idx, pos = encoded[n]
            negs = _sample_negatives(rng, len(classes), pos, k)
            if len(idx) == 0:
                total += margin
                continue
            norm = np.sqrt(len(idx))
            e = V[idx].sum(axis=0) / norm
            terms = margin - e @ L[pos] + L[negs] @ e
            active = terms > 0
            total += float(np.maximum(terms, 0.0).mean())
            n_active = int(active.sum())
            if n_active == 0:
                continue
            act = negs[active]
            grad_e = (L[act].sum(axis=0) - n_active * L[pos]) / k
            grad_pos = np.clip(-(n_active / k) * e, -GRAD_CLIP, GRAD_CLIP)
            grad_neg = np.zeros_like(L)
            np.add.at(grad_neg, act, e / k)
            grad_items = np.clip(grad_e / norm, -GRAD_CLIP, GRAD_CLIP)
            V[idx] -= lr * grad_items
            L[pos] -= lr * grad_pos
            L -= lr * np.clip(grad_neg, -GRAD_CLIP, GRAD_CLIP)
        model.loss_history.append(total / max(len(encoded), 1))
    return model


def margin_scores(scores: np.ndarray, positive: int) -> np.ndarray:
    """Ranking score for AUC: sim(pos) minus the best competing similarity."""
    scores = np.atleast_2d(scores)
    others = np.delete(scores, positive, axis=1)
    return scores[:, positive] - others.max(axis=1)
