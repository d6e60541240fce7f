"""Stratified cross-validation, metrics and result tables."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import propdrm, propstar
from .propdrm import DrmConfig
from .propstar import StarTrainConfig
from .relstore import RelationalDatabase
from .wordify import InstanceBag, WordifyParams, frequency_selection, to_sparse_matrix, wordify_database

log = logging.getLogger(__name__)

METHODS = ("propstar", "propdrm", "majority")


@dataclass(frozen=True)
class FoldAssignment:
    folds: np.ndarray  # fold id per instance
    k: int
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds != fold)


def stratified_kfold(labels, k: int, seed: int = 0) -> FoldAssignment:
    """Shuffle each class (seeded) and deal its members round-robin over the folds.

    The dealing position carries over from one class to the next, which
    keeps total fold sizes within one of each other.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of instances ({n})")
    classes, counts = np.unique(labels, return_counts=True)
    if k > counts.min():
        warnings.warn(f"k={k} exceeds the smallest class size ({counts.min()}); some folds lack that class")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        folds[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return FoldAssignment(folds, k, seed)


def accuracy(predicted, actual) -> float:
    predicted, actual = np.asarray(predicted), np.asarray(actual)
    if len(predicted) != len(actual):
        raise ValueError("length mismatch")
    if len(actual) == 0:
        raise ValueError("accuracy of an empty set")
    return float(np.mean(predicted == actual))


def auc(scores, actual) -> float:
    """Mann-Whitney AUC: P(random positive outscores random negative), ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    actual = np.asarray(actual).astype(bool)
    n_pos = int(actual.sum())
    n_neg = len(actual) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[actual].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class FoldResult:
    run: int
    fold: int
    accuracy: float
    auc: float  # nan when the test fold holds a single class


@dataclass
class MetricsReport:
    dataset: str
    method: str
    config_id: str
    folds: list[FoldResult] = field(default_factory=list)

    def _run_means(self, attr: str) -> dict[int, float]:
        out = {}
        for r in sorted({f.run for f in self.folds}):
            vals = np.array([getattr(f, attr) for f in self.folds if f.run == r])
            vals = vals[~np.isnan(vals)]
            out[r] = float(vals.mean()) if len(vals) else math.nan
        return out

    @property
    def run_accuracy(self) -> dict[int, float]:
        return self._run_means("accuracy")

    @property
    def run_auc(self) -> dict[int, float]:
        return self._run_means("auc")

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(list(self.run_accuracy.values())))

    @property
    def mean_auc(self) -> float:
        vals = [v for v in self.run_auc.values() if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def std_accuracy(self) -> float:
        return float(np.std(list(self.run_accuracy.values())))

    @property
    def std_auc(self) -> float:
        vals = [v for v in self.run_auc.values() if not math.isnan(v)]
        return float(np.std(vals)) if vals else math.nan

    FOLD_HEADER = ("dataset", "method", "config_id", "run", "fold", "accuracy", "auc")
    SUMMARY_HEADER = ("dataset", "method", "config_id", "runs", "mean_accuracy", "std_accuracy", "mean_auc", "std_auc")

    def fold_rows(self) -> list[tuple]:
        return [
            (self.dataset, self.method, self.config_id, f.run, f.fold, repr(f.accuracy), repr(f.auc))
            for f in self.folds
        ]

    def summary_row(self) -> tuple:
        return (
            self.dataset,
            self.method,
            self.config_id,
            len(self.run_accuracy),
            repr(self.mean_accuracy),
            repr(self.std_accuracy),
            repr(self.mean_auc),
            repr(self.std_auc),
        )


def write_reports(reports: Sequence[MetricsReport], fold_path, summary_path) -> None:
    with open(fold_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MetricsReport.FOLD_HEADER)
        for rep in reports:
            w.writerows(rep.fold_rows())
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MetricsReport.SUMMARY_HEADER)
        for rep in reports:
            w.writerow(rep.summary_row())


@dataclass(frozen=True)
class ExperimentSetup:
    method: str
    model: StarTrainConfig | DrmConfig | None = None
    budget: int = 10_000
    min_freq: int = 1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")


def _fit_and_score(
    setup: ExperimentSetup,
    train_bags: Sequence[InstanceBag],
    test_bags: Sequence[InstanceBag],
    classes: Sequence[str],
    positive: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and positive-class ranking scores for the test bags."""
    train_labels = np.array([b.label for b in train_bags])
    vocab = None
    if setup.method != "majority":
        vocab = frequency_selection(train_bags, setup.budget, setup.min_freq)
        if len(np.unique(train_labels)) < 2:
            log.warning("training fold holds a single class; predicting it for every test instance")
            setup = replace(setup, method="majority")
    if setup.method == "majority":
        counts = np.bincount(train_labels, minlength=len(classes))
        majority = int(np.argmax(counts))
        return np.full(len(test_bags), majority), np.full(len(test_bags), float(majority == positive))
    if setup.method == "propstar":
        cfg = replace(setup.model or StarTrainConfig(), seed=seed)
        model = propstar.train(train_bags, vocab, classes, cfg)
        pred, scores = propstar.predict_many(model, test_bags)
        return pred, propstar.margin_scores(scores, positive)
    cfg = replace(setup.model or DrmConfig(), seed=seed)
    train_m, _ = to_sparse_matrix(train_bags, vocab)
    test_m, _ = to_sparse_matrix(test_bags, vocab)
    model = propdrm.train(train_m, train_labels, cfg, classes=classes)
    pred, scores = propdrm.predict(model, test_m)
    if not model.binary:
        scores = scores[:, positive]
    elif positive == 0:
        scores = 1.0 - scores
    return pred, scores


def _run_fold(args) -> FoldResult:
    setup, bags, classes, positive, assignment, run, fold, seed = args
    tr = assignment.train_indices(fold)
    te = assignment.test_indices(fold)
    train_bags = [bags[i] for i in tr]
    test_bags = [bags[i] for i in te]
    pred, scores = _fit_and_score(setup, train_bags, test_bags, classes, positive, seed)
    actual = np.array([b.label for b in test_bags])
    is_pos = actual == positive
    fold_auc = auc(scores, is_pos) if 0 < is_pos.sum() < len(is_pos) else math.nan
    return FoldResult(run, fold, accuracy(pred, actual), fold_auc)


def run_experiment_on_bags(
    bags: Sequence[InstanceBag],
    classes: Sequence[str],
    setup: ExperimentSetup,
    k: int = 10,
    n_runs: int = 5,
    seed: int = 0,
    positive: int | None = None,
    jobs: int = 1,
    dataset: str = "",
    config_id: str = "default",
) -> MetricsReport:
    """Repeated stratified k-fold CV; run r folds and initializes models with seed + r.

    The vocabulary is selected from the training fold only.
    """
    labels = np.array([b.label for b in bags])
    positive = len(classes) - 1 if positive is None else positive
    tasks = []
    for r in range(n_runs):
        assignment = stratified_kfold(labels, k, seed + r)
        for f in range(k):
            tasks.append((setup, bags, classes, positive, assignment, r, f, seed + r))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    results.sort(key=lambda f: (f.run, f.fold))
    return MetricsReport(dataset, setup.method, config_id, results)


def run_experiment(
    db: RelationalDatabase,
    setup: ExperimentSetup | str,
    k: int = 10,
    n_runs: int = 5,
    seed: int = 0,
    params: WordifyParams = WordifyParams(),
    jobs: int = 1,
    dataset: str = "",
    config_id: str = "default",
) -> MetricsReport:
    if isinstance(setup, str):
        setup = ExperimentSetup(setup)
    bags = wordify_database(db, params)
    return run_experiment_on_bags(
        bags, db.classes, setup, k, n_runs, seed, db.positive_class, jobs, dataset, config_id
    )
