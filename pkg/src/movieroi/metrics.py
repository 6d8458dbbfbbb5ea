"""Scoring and model-inspection metrics.

AUC is the trapezoidal area under the ROC curve (equivalently the
probability that a random positive outscores a random negative, ties
counted half). Permutation importance reports the AUC drop after shuffling
a column (or a whole feature group with one shared permutation) on
held-out rows. Univariate summaries back the per-category mean-ROI plots
with seeded bootstrap confidence intervals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError
from .features import FeatureMatrix
from .forest import Forest


@dataclass(frozen=True)
class RocPoint:
    false_positive_rate: float
    true_positive_rate: float
    threshold: float


@dataclass
class RocCurve:
    points: list[RocPoint]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["fpr", "tpr", "threshold"])
            for p in self.points:
                writer.writerow([repr(p.false_positive_rate), repr(p.true_positive_rate),
                                 repr(p.threshold)])

    def to_svg(self, path, auc_value: float | None = None) -> None:
        """Minimal static rendering: ROC polyline plus the chance diagonal."""
        size, margin = 360, 40
        span = size - 2 * margin

        def sx(v: float) -> float:
            return margin + v * span

        def sy(v: float) -> float:
            return size - margin - v * span

        coords = " ".join(
            f"{sx(p.false_positive_rate):.2f},{sy(p.true_positive_rate):.2f}"
            for p in self.points
        )
        label = f"AUC = {auc_value:.3f}" if auc_value is not None else ""
        svg = f"""<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">
<rect width="{size}" height="{size}" fill="white"/>
<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" stroke="#bbbbbb" stroke-dasharray="4 3"/>
<polyline points="{coords}" fill="none" stroke="#1f6fb2" stroke-width="2"/>
<rect x="{margin}" y="{margin}" width="{span}" height="{span}" fill="none" stroke="black"/>
<text x="{size / 2:.0f}" y="{size - 8}" text-anchor="middle" font-size="12">false positive rate</text>
<text x="12" y="{size / 2:.0f}" text-anchor="middle" font-size="12" transform="rotate(-90 12 {size / 2:.0f})">true positive rate</text>
<text x="{size - margin - 4}" y="{size - margin - 8}" text-anchor="end" font-size="12">{label}</text>
</svg>
"""
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(svg)


def _check_two_classes(labels: np.ndarray) -> tuple[int, int]:
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise EvaluationError("labels contain a single class; ROC/AUC undefined")
    return positives, negatives


def roc_curve(scores, labels) -> RocCurve:
    """ROC points at descending distinct score thresholds.

    Tied scores advance TPR and FPR jointly; the curve starts at (0, 0)
    with threshold +inf and ends at (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if scores.shape != y.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    positives, negatives = _check_two_classes(y)

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_y = y[order]
    # last index of each tie group
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    group_ends = np.concatenate([distinct, [scores.size - 1]])
    tp = np.cumsum(sorted_y)[group_ends]
    fp = (group_ends + 1) - tp

    points = [RocPoint(0.0, 0.0, float("inf"))]
    for end, tpc, fpc in zip(group_ends, tp, fp):
        points.append(
            RocPoint(float(fpc / negatives), float(tpc / positives),
                     float(sorted_scores[end]))
        )
    return RocCurve(points=points)


def auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve, in [0, 1]."""
    curve = roc_curve(scores, labels)
    area = 0.0
    for prev, cur in zip(curve.points, curve.points[1:]):
        area += (cur.false_positive_rate - prev.false_positive_rate) * (
            cur.true_positive_rate + prev.true_positive_rate
        ) / 2.0
    return float(area)


def random_baseline(labels, seed: int = 0) -> np.ndarray:
    """Seeded uniform scores: the chance-level reference ranking."""
    n = np.asarray(labels).shape[0]
    return np.random.default_rng(seed).random(n)


@dataclass(frozen=True)
class ImportanceEntry:
    name: str
    iv: float
    repeat_mean: float
    repeat_stddev: float
    n_repeats: int


@dataclass
class ImportanceReport:
    baseline_auc: float
    entries: list[ImportanceEntry] = field(default_factory=list)

    def by_name(self, name: str) -> ImportanceEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def top(self, n: int) -> list[ImportanceEntry]:
        return sorted(self.entries, key=lambda e: -e.iv)[:n]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["feature", "iv", "stddev", "n_repeats"])
            for e in sorted(self.entries, key=lambda e: -e.iv):
                writer.writerow([e.name, repr(e.iv), repr(e.repeat_stddev), e.n_repeats])


@dataclass
class GroupImportanceReport:
    baseline_auc: float
    entries: list[ImportanceEntry] = field(default_factory=list)

    def by_name(self, name: str) -> ImportanceEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["group", "iv", "stddev", "n_repeats"])
            for e in sorted(self.entries, key=lambda e: -e.iv):
                writer.writerow([e.name, repr(e.iv), repr(e.repeat_stddev), e.n_repeats])


def _permuted_aucs(
    forest: Forest,
    values: np.ndarray,
    labels: np.ndarray,
    column_indices: list[int],
    rng: np.random.Generator,
    n_repeats: int,
) -> np.ndarray:
    """AUCs after jointly permuting the given columns, one shared
    permutation per repeat (column restored afterwards)."""
    original = values[:, column_indices].copy()
    out = np.empty(n_repeats)
    for r in range(n_repeats):
        perm = rng.permutation(values.shape[0])
        values[:, column_indices] = original[perm]
        out[r] = auc(forest.predict_proba(values), labels)
    values[:, column_indices] = original
    return out


def permutation_importance(
    forest: Forest,
    matrix: FeatureMatrix,
    labels,
    n_repeats: int = 10,
    seed: int = 0,
) -> ImportanceReport:
    """Per-feature AUC drop when that column is shuffled on held-out rows.

    Each column gets its own RNG stream derived from (seed, column index),
    so per-column scores are independent of evaluation order.
    """
    model = matrix.model_view()
    y = np.asarray(labels, dtype=np.int64)
    values = model.values.copy()
    baseline = auc(forest.predict_proba(values), y)
    report = ImportanceReport(baseline_auc=baseline)
    for j, col in enumerate(model.columns):
        rng = np.random.default_rng([seed, j])
        permuted = _permuted_aucs(forest, values, y, [j], rng, n_repeats)
        report.entries.append(
            ImportanceEntry(
                name=col.name,
                iv=float(baseline - permuted.mean()),
                repeat_mean=float(permuted.mean()),
                repeat_stddev=float(permuted.std()),
                n_repeats=n_repeats,
            )
        )
    return report


def group_importance(
    forest: Forest,
    matrix: FeatureMatrix,
    labels,
    groups: list[str] | None = None,
    n_repeats: int = 10,
    seed: int = 0,
) -> GroupImportanceReport:
    """AUC drop when all of a group's columns move under one shared row
    permutation per repeat (intra-group structure preserved).

    The RNG stream is keyed by the group's first model column index, so a
    single-column group reproduces that feature's individual importance
    exactly. Groups with no model-included columns are absent.
    """
    model = matrix.model_view()
    y = np.asarray(labels, dtype=np.int64)
    values = model.values.copy()

    group_cols: dict[str, list[int]] = {}
    for j, col in enumerate(model.columns):
        group_cols.setdefault(col.group, []).append(j)
    if groups is None:
        groups = list(group_cols)
    else:
        unknown = [g for g in groups if g not in group_cols]
        if unknown:
            raise KeyError(f"unknown feature groups: {unknown}")

    baseline = auc(forest.predict_proba(values), y)
    report = GroupImportanceReport(baseline_auc=baseline)
    for g in groups:
        cols = group_cols[g]
        rng = np.random.default_rng([seed, cols[0]])
        permuted = _permuted_aucs(forest, values, y, cols, rng, n_repeats)
        report.entries.append(
            ImportanceEntry(
                name=g,
                iv=float(baseline - permuted.mean()),
                repeat_mean=float(permuted.mean()),
                repeat_stddev=float(permuted.std()),
                n_repeats=n_repeats,
            )
        )
    return report


@dataclass(frozen=True)
class CategorySummary:
    category: str
    mean_roi: float
    ci_low: float
    ci_high: float
    count: int


def quartile_bin(values) -> np.ndarray:
    """Label continuous values Q1..Q4 by quartile membership."""
    values = np.asarray(values, dtype=np.float64)
    edges = np.quantile(values, [0.25, 0.5, 0.75])
    idx = np.searchsorted(edges, values, side="right")
    labels = np.array(["Q1", "Q2", "Q3", "Q4"])
    return labels[idx]


def univariate_summary(
    categories, roi, n_boot: int = 1000, seed: int = 0, level: float = 0.95
) -> list[CategorySummary]:
    """Per-category mean ROI with a seeded bootstrap percentile CI."""
    categories = np.asarray(categories)
    roi = np.asarray(roi, dtype=np.float64)
    if categories.shape != roi.shape or categories.ndim != 1:
        raise ValueError("categories and roi must be equal-length vectors")
    if categories.size == 0:
        raise ValueError("cannot summarize an empty dataset")
    alpha = (1.0 - level) / 2.0
    out = []
    for rank, cat in enumerate(sorted(set(categories.tolist()), key=str)):
        values = roi[categories == cat]
        rng = np.random.default_rng([seed, rank])
        draws = values[rng.integers(0, values.size, size=(n_boot, values.size))]
        means = draws.mean(axis=1)
        out.append(
            CategorySummary(
                category=str(cat),
                mean_roi=float(values.mean()),
                ci_low=float(np.quantile(means, alpha)),
                ci_high=float(np.quantile(means, 1.0 - alpha)),
                count=int(values.size),
            )
        )
    return out


def write_univariate_csv(summaries: list[CategorySummary], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["category", "mean_roi", "ci_low", "ci_high", "count"])
        for s in summaries:
            writer.writerow([s.category, repr(s.mean_roi), repr(s.ci_low),
                             repr(s.ci_high), s.count])
