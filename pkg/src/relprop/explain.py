"""Shapley attributions over an instance's active features.

A coalition S keeps the features in S active and removes the rest (zeroed
matrix entries for the MLP, dropped items for the embedding model).  The
empty coalition is the all-absent baseline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import propdrm, propstar

MAX_EXACT_FEATURES = 20


class TooManyFeaturesError(ValueError):
    pass


@dataclass(frozen=True)
class Attribution:
    features: tuple[int, ...]  # vocabulary indices of the explained features
    phi: np.ndarray
    base: float  # f(empty coalition)
    value: float  # f(all features)
    items: tuple[str, ...] = ()
    std_error: np.ndarray | None = None

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.features, self.phi.tolist()))


class CoalitionEvaluator:
    """Scores a model input restricted to a coalition of the instance's features.

    Coalitions are boolean masks over ``features``.  Subclasses may override
    :meth:`evaluate_many` with a vectorised version.
    """

    def __init__(self, fn: Callable[[np.ndarray], float], features: Sequence[int], items: Sequence[str] = ()) -> None:
        self.fn = fn
        self.features = tuple(int(f) for f in features)
        self.items = tuple(items)

    @property
    def n(self) -> int:
        return len(self.features)

    def __call__(self, mask) -> float:
        return float(self.fn(np.asarray(mask, dtype=bool)))

    def evaluate_many(self, masks: np.ndarray) -> np.ndarray:
        return np.array([self(m) for m in masks], dtype=np.float64)


class DrmEvaluator(CoalitionEvaluator):
    """Positive-class probability of an MLP with inactive features zeroed."""

    def __init__(self, model: propdrm.MlpModel, active: Sequence[int], positive: int = 1, items: Sequence[str] = ()) -> None:
        self.model = model
        self.positive = positive
        super().__init__(lambda m: self.evaluate_many(m[None, :])[0], active, items)

    def evaluate_many(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks)
        X = np.zeros((len(masks), self.model.n_inputs))
        if self.n:
            X[:, list(self.features)] = masks
        p, _ = propdrm.forward(self.model, X)
        if self.model.binary:
            return p if self.positive == 1 else 1.0 - p
        return p[:, self.positive]


class StarEvaluator(CoalitionEvaluator):
    """Similarity margin of the positive label for the bag restricted to the coalition."""

    def __init__(self, model: propstar.EmbeddingModel, active: Sequence[int], positive: int = 1, items: Sequence[str] = ()) -> None:
        self.model = model
        self.positive = positive
        super().__init__(lambda m: self.evaluate_many(m[None, :])[0], active, items)

    def evaluate_many(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks).astype(np.float64)
        V = self.model.item_vectors[list(self.features)] if self.n else np.zeros((0, self.model.dim))
        counts = masks.sum(axis=1)
        sums = masks @ V
        E = np.divide(sums, np.sqrt(counts)[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)
        scores = E @ self.model.label_vectors.T
        return propstar.margin_scores(scores, self.positive)


def drm_evaluator(model, matrix, row: int, positive: int = 1, vocab_items: Sequence[str] = ()) -> DrmEvaluator:
    active = matrix.row(row)
    items = [vocab_items[j] for j in active] if vocab_items else ()
    return DrmEvaluator(model, active, positive, items)


def star_evaluator(model: propstar.EmbeddingModel, bag, positive: int = 1) -> StarEvaluator:
    items = bag.items if hasattr(bag, "items") else bag
    active = model.item_indices(items)
    return StarEvaluator(model, active, positive, [model.items[j] for j in active])


def _all_masks(n: int) -> np.ndarray:
    codes = np.arange(2**n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def exact_shapley(evaluator: CoalitionEvaluator) -> Attribution:
    """Shapley values by full subset enumeration (2^n evaluations).

    phi_i = sum over S not containing i of |S|!(n-|S|-1)!/n! * (f(S+i) - f(S))
    """
    n = evaluator.n
    if n > MAX_EXACT_FEATURES:
        raise TooManyFeaturesError(
            f"{n} features exceed the exact limit of {MAX_EXACT_FEATURES}; use sampled mode"
        )
    masks = _all_masks(n)
    f = evaluator.evaluate_many(masks)
    sizes = masks.sum(axis=1)
    codes = np.arange(2**n, dtype=np.int64)
    phi = np.zeros(n)
    for i in range(n):
        without = codes[~masks[:, i]]
        s = sizes[without]
        w = np.array([1.0 / (n * math.comb(n - 1, int(k))) for k in range(n)])[s]
        phi[i] = np.sum(w * (f[without | (1 << i)] - f[without]))
    return Attribution(evaluator.features, phi, float(f[0]), float(f[-1]), evaluator.items)


def sampled_shapley(evaluator: CoalitionEvaluator, n_permutations: int = 1000, seed: int = 0) -> Attribution:
    """Monte Carlo Shapley values: marginal contributions averaged over random orderings."""
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    n = evaluator.n
    empty = np.zeros((1, n), dtype=bool)
    base = float(evaluator.evaluate_many(empty)[0])
    full = float(evaluator.evaluate_many(~empty)[0])
    if n == 0:
        return Attribution((), np.zeros(0), base, full, evaluator.items, np.zeros(0))
    rng = np.random.default_rng(seed)
    contrib = np.zeros((n_permutations, n))
    for p in range(n_permutations):
        order = rng.permutation(n)
        masks = np.zeros((n + 1, n), dtype=bool)
        for step, j in enumerate(order):
            masks[step + 1 :, j] = True
        f = evaluator.evaluate_many(masks)
        contrib[p, order] = np.diff(f)
    phi = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / np.sqrt(n_permutations) if n_permutations > 1 else np.full(n, np.nan)
    return Attribution(evaluator.features, phi, base, full, evaluator.items, se)


def mean_abs_attribution(attributions: Sequence[Attribution], names: dict[int, str] | None = None):
    """Features ranked by mean |phi| over instances (absent features count 0).

    Returns (feature, name, mean_abs) triples; ties broken by name.
    """
    if not attributions:
        raise ValueError("need at least one attribution")
    names = dict(names or {})
    totals: dict[int, float] = {}
    for a in attributions:
        for j, (f, v) in enumerate(zip(a.features, a.phi)):
            totals[f] = totals.get(f, 0.0) + abs(float(v))
            if a.items and f not in names:
                names[f] = a.items[j]
    n = len(attributions)
    ranked = [(f, names.get(f, str(f)), t / n) for f, t in totals.items()]
    ranked.sort(key=lambda r: (-r[2], r[1]))
    return ranked


def write_attributions(rows: Sequence[tuple[object, Attribution]], path) -> None:
    """CSV ``instance,feature,canonical_item,phi``; feature -1 carries the baseline phi_0."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("instance", "feature", "canonical_item", "phi"))
        for instance, a in rows:
            w.writerow((instance, -1, "__baseline__", repr(a.base)))
            for j, (f, v) in enumerate(zip(a.features, a.phi)):
                w.writerow((instance, f, a.items[j] if a.items else "", repr(float(v))))


def write_ranking(ranking, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("rank", "feature", "canonical_item", "mean_abs_phi"))
        for r, (f, name, v) in enumerate(ranking, 1):
            w.writerow((r, f, name, repr(v)))
