"""Hyperparameter grid, stratified k-fold CV and seeded randomized search.

The grid spans n_estimators 100..1000 (step 100), max_features at integer
multiples of floor(sqrt(p)) up to p, max_depth 10..100 (step 10),
min_samples_split {0.01, 0.03, 0.05} and min_samples_leaf {1, 3, 5};
bootstrap is always on. Search draws distinct configurations uniformly
without replacement and scores each by mean held-out AUC over stratified
folds built once per search.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import forest as rf
from .errors import EvaluationError, TrainingError
from .metrics import auc


@dataclass(frozen=True)
class ParamGrid:
    n_estimators: tuple[int, ...] = tuple(range(100, 1001, 100))
    max_features: tuple[int, ...] = ()
    max_depth: tuple[int, ...] = tuple(range(10, 101, 10))
    min_samples_split: tuple[float, ...] = (0.01, 0.03, 0.05)
    min_samples_leaf: tuple[int, ...] = (1, 3, 5)
    bootstrap: tuple[bool, ...] = (True,)

    _FIELDS = ("n_estimators", "max_features", "max_depth",
               "min_samples_split", "min_samples_leaf", "bootstrap")

    @property
    def size(self) -> int:
        out = 1
        for name in self._FIELDS:
            out *= len(getattr(self, name))
        return out

    def config_at(self, index: int, seed: int = 0) -> rf.RfConfig:
        """The index-th configuration in canonical (odometer) order."""
        if not 0 <= index < self.size:
            raise IndexError(index)
        values = {}
        for name in reversed(self._FIELDS):
            options = getattr(self, name)
            index, pos = divmod(index, len(options))
            values[name] = options[pos]
        return rf.RfConfig(seed=seed, **values)


def build_grid(p: int) -> ParamGrid:
    """Grid for a p-feature matrix; max_features are the integer multiples
    of floor(sqrt(p)) that do not exceed p."""
    if p < 1:
        raise ValueError("feature count must be >= 1")
    step = math.floor(math.sqrt(p))
    max_features = tuple(range(step, p + 1, step))
    return ParamGrid(max_features=max_features)


def stratified_kfold(labels, k: int = 4, seed: int = 0) -> np.ndarray:
    """Fold index per row; per-fold class counts stay within 1 of
    proportional and fold sizes within 1 of each other."""
    y = np.asarray(labels)
    classes, y_idx = np.unique(y, return_inverse=True)
    n = y_idx.size
    if k < 2:
        raise ValueError("k must be >= 2")
    counts = np.bincount(y_idx)
    if counts.min() < k:
        small = classes[int(np.argmin(counts))]
        raise ValueError(f"class {small!r} has fewer than k={k} members")

    # deal the sorted class sequence round-robin to get per-fold quotas
    y_sorted = np.sort(y_idx)
    quota = np.stack(
        [np.bincount(y_sorted[i::k], minlength=classes.size) for i in range(k)]
    )

    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    for c in range(classes.size):
        members = np.nonzero(y_idx == c)[0]
        members = rng.permutation(members)
        stops = np.cumsum(quota[:, c])
        start = 0
        for f in range(k):
            folds[members[start:stops[f]]] = f
            start = stops[f]
    return folds


@dataclass
class CvResult:
    config: rf.RfConfig
    fold_aucs: np.ndarray
    mean_auc: float
    draw_index: int = -1


@dataclass
class SearchConfig:
    n_iter: int = 100
    folds: int = 4
    seed: int = 0


def cross_validate(config: rf.RfConfig, X, labels, folds: np.ndarray) -> CvResult:
    """Mean held-out AUC across folds; a single-class fold is an error."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    fold_ids = np.unique(folds)
    aucs = []
    for f in fold_ids:
        held = folds == f
        y_held = y[held]
        if y_held.min() == y_held.max():
            raise EvaluationError(f"fold {int(f)} holds a single class; AUC undefined")
        model = rf.fit(X[~held], y[~held], config)
        aucs.append(auc(model.predict_proba(X[held]), y_held))
    fold_aucs = np.array(aucs)
    return CvResult(config=config, fold_aucs=fold_aucs, mean_auc=float(fold_aucs.mean()))


def random_search(
    grid: ParamGrid, search_cfg: SearchConfig, X, labels
) -> tuple[rf.RfConfig, list[CvResult]]:
    """Evaluate n_iter distinct uniform grid draws; return the AUC-argmax
    (earliest draw wins ties) and every result in draw order."""
    if grid.size == 0:
        raise ValueError("empty grid")
    if search_cfg.n_iter > grid.size:
        raise ValueError(
            f"n_iter={search_cfg.n_iter} exceeds grid cardinality {grid.size}"
        )
    rng = np.random.default_rng(search_cfg.seed)
    drawn = rng.choice(grid.size, size=search_cfg.n_iter, replace=False)
    folds = stratified_kfold(labels, k=search_cfg.folds, seed=search_cfg.seed)

    results: list[CvResult] = []
    best: CvResult | None = None
    for draw_index, grid_index in enumerate(drawn):
        config = grid.config_at(int(grid_index), seed=search_cfg.seed)
        result = cross_validate(config, X, labels, folds)
        result.draw_index = draw_index
        results.append(result)
        if best is None or result.mean_auc > best.mean_auc:
            best = result
    assert best is not None
    return best.config, results


def write_search_results_csv(results: list[CvResult], path) -> None:
    k = results[0].fold_aucs.size if results else 0
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["draw_index", "n_estimators", "max_features", "max_depth",
             "min_samples_split", "min_samples_leaf"]
            + [f"fold_auc_{i + 1}" for i in range(k)]
            + ["mean_auc"]
        )
        for r in results:
            c = r.config
            writer.writerow(
                [r.draw_index, c.n_estimators, c.max_features, c.max_depth,
                 repr(c.min_samples_split), c.min_samples_leaf]
                + [repr(float(a)) for a in r.fold_aucs]
                + [repr(r.mean_auc)]
            )
