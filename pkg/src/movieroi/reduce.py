"""Dimensionality reduction: truncated SVD on sparse blocks, then pruning
of highly rank-correlated features.

The genome block and the one-hot genre block are each centered on training
means and projected onto their top singular directions. Afterwards any
surviving pair of model columns with |Spearman rho| >= 0.75 loses the
member with lower mutual information against the training label. Fitting
happens on training rows only; the fitted pipeline replays the identical
projection and drop list on test rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotFittedError
from .features import ColumnMeta, FeatureMatrix

DEFAULT_GENOME_COMPONENTS = 14
DEFAULT_GENRE_COMPONENTS = 5
DEFAULT_CORR_THRESHOLD = 0.75
MI_BINS = 16
# above this width the dense SVD is replaced by a randomized range finder
DENSE_SVD_MAX_COLS = 2048
_RANGE_FINDER_OVERSAMPLE = 10
_RANGE_FINDER_POWER_ITERS = 4


@dataclass
class SvdModel:
    """Truncated SVD of one column block, centered on training means."""

    block_name: str
    column_means: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    singular_values: np.ndarray
    k: int

    def project(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=np.float64)
        if block.shape[1] != self.column_means.size:
            raise ValueError(
                f"block {self.block_name!r}: expected {self.column_means.size} columns, "
                f"got {block.shape[1]}"
            )
        return (block - self.column_means) @ self.components.T

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        return projected @ self.components + self.column_means


def _canonical_signs(components: np.ndarray) -> np.ndarray:
    """Flip each component so its largest-magnitude entry is positive."""
    out = components.copy()
    for row in out:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return out


def _randomized_svd(centered: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Range-finder SVD for very wide blocks; deterministic internal seed."""
    n, d = centered.shape
    rng = np.random.default_rng(0x5BD1)
    width = min(d, k + _RANGE_FINDER_OVERSAMPLE)
    sketch = centered @ rng.standard_normal((d, width))
    basis, _ = np.linalg.qr(sketch)
    for _ in range(_RANGE_FINDER_POWER_ITERS):
        basis, _ = np.linalg.qr(centered.T @ basis)
        basis, _ = np.linalg.qr(centered @ basis)
    small = basis.T @ centered
    _, singulars, vt = np.linalg.svd(small, full_matrices=False)
    return singulars[:k], vt[:k]


def fit_svd(block: np.ndarray, k: int, block_name: str = "block") -> SvdModel:
    """Top-k right singular directions of the column-centered block."""
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] < 2:
        raise ValueError("SVD needs a 2-D block with at least 2 rows")
    n, d = block.shape
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k={k} out of range for a {n}x{d} block")
    means = block.mean(axis=0)
    centered = block - means
    if d <= DENSE_SVD_MAX_COLS:
        _, singulars, vt = np.linalg.svd(centered, full_matrices=False)
        singulars, vt = singulars[:k], vt[:k]
    else:
        singulars, vt = _randomized_svd(centered, k)
    return SvdModel(
        block_name=block_name,
        column_means=means,
        components=_canonical_signs(vt),
        singular_values=singulars,
        k=k,
    )


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their group's average rank."""
    x = np.asarray(x)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg = ends - (counts - 1) / 2.0
    return avg[inverse]


def spearman_corr(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of average-rank transforms, in [-1, 1].

    Undefined (raises) when either vector is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("spearman_corr needs two equal-length vectors of size >= 2")
    rx, ry = average_ranks(x), average_ranks(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        raise ValueError("spearman correlation undefined for a constant vector")
    return float((dx * dy).sum() / (sx * sy))


def equal_frequency_bins(x: np.ndarray, n_bins: int = MI_BINS) -> np.ndarray:
    """Discretize by quantile edges; tied values always share a bin."""
    x = np.asarray(x, dtype=np.float64)
    edges = np.quantile(x, [j / n_bins for j in range(1, n_bins)])
    return np.searchsorted(edges, x, side="right")


def mutual_information(feature: np.ndarray, label: np.ndarray, n_bins: int = MI_BINS) -> float:
    """Plug-in mutual information in bits between a binned feature and a
    binary label; always >= 0."""
    feature = np.asarray(feature, dtype=np.float64)
    label = np.asarray(label)
    if feature.shape != label.shape or feature.ndim != 1 or feature.size < 2:
        raise ValueError("mutual_information needs two equal-length vectors of size >= 2")
    bins = equal_frequency_bins(feature, n_bins)
    _, bin_idx = np.unique(bins, return_inverse=True)
    _, lab_idx = np.unique(label, return_inverse=True)
    n_b = bin_idx.max() + 1
    n_l = lab_idx.max() + 1
    joint = np.bincount(bin_idx * n_l + lab_idx, minlength=n_b * n_l).reshape(n_b, n_l)
    joint = joint / joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float((joint[nz] * np.log2(joint[nz] / (px @ py)[nz])).sum())
    return max(mi, 0.0)


@dataclass(frozen=True)
class PruneEntry:
    dropped_column: str
    partner_column: str
    spearman_rho: float
    mi_dropped: float
    mi_kept: float


@dataclass
class PruneReport:
    entries: list[PruneEntry] = field(default_factory=list)

    def dropped_names(self) -> list[str]:
        return [e.dropped_column for e in self.entries]

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["dropped", "partner", "rho", "mi_dropped", "mi_kept"])
            for e in self.entries:
                writer.writerow([e.dropped_column, e.partner_column, repr(e.spearman_rho),
                                 repr(e.mi_dropped), repr(e.mi_kept)])


def _rank_correlation_matrix(values: np.ndarray) -> np.ndarray:
    """Pairwise Spearman correlations; NaN rows/cols for constant columns."""
    n, d = values.shape
    ranks = np.column_stack([average_ranks(values[:, j]) for j in range(d)])
    centered = ranks - ranks.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = np.where(norms > 0, centered / np.where(norms > 0, norms, 1.0), np.nan)
        corr = normalized.T @ normalized
    corr[norms == 0, :] = np.nan
    corr[:, norms == 0] = np.nan
    return corr


def prune_correlated(
    matrix: FeatureMatrix,
    labels: np.ndarray,
    threshold: float = DEFAULT_CORR_THRESHOLD,
) -> tuple[FeatureMatrix, PruneReport]:
    """Drop the lower-MI member of every surviving pair with |rho| >= threshold.

    Pairs are processed in descending |rho| so multi-way correlated clusters
    resolve deterministically; an MI tie drops the later column. Constant
    columns have undefined rank correlation and are never pruned here.
    """
    values = matrix.values
    d = values.shape[1]
    corr = _rank_correlation_matrix(values)
    mi = np.array([mutual_information(values[:, j], labels) for j in range(d)])

    pairs = []
    for i in range(d):
        for j in range(i + 1, d):
            rho = corr[i, j]
            if not np.isnan(rho) and abs(rho) >= threshold:
                pairs.append((-abs(rho), i, j, rho))
    pairs.sort()

    alive = np.ones(d, dtype=bool)
    report = PruneReport()
    for _, i, j, rho in pairs:
        if not (alive[i] and alive[j]):
            continue
        if mi[i] == mi[j]:
            drop, keep = max(i, j), min(i, j)  # tie: drop the later column
        elif mi[i] < mi[j]:
            drop, keep = i, j
        else:
            drop, keep = j, i
        alive[drop] = False
        report.entries.append(
            PruneEntry(
                dropped_column=matrix.columns[drop].name,
                partner_column=matrix.columns[keep].name,
                spearman_rho=float(rho),
                mi_dropped=float(mi[drop]),
                mi_kept=float(mi[keep]),
            )
        )

    keep_names = [matrix.columns[j].name for j in range(d) if alive[j]]
    return matrix.select(keep_names), report


@dataclass
class ReducerPipeline:
    """SVD on the genome and genre blocks, then correlation pruning.

    Fit on the training matrix (model-included columns are reduced, other
    columns pass through untouched); transform replays the projection and
    the drop list so train and test emit identical column sets.
    """

    genome_k: int | None = DEFAULT_GENOME_COMPONENTS
    genre_k: int | None = DEFAULT_GENRE_COMPONENTS
    corr_threshold: float = DEFAULT_CORR_THRESHOLD
    genome_prefix: str = "genome_"
    genre_prefix: str = "genre_"
    svd_models: dict = field(default_factory=dict)
    prune_report: PruneReport | None = None
    dropped_columns: list[str] = field(default_factory=list)
    output_names: list[str] | None = None
    fitted: bool = False

    def _block_columns(self, matrix: FeatureMatrix, prefix: str) -> list[int]:
        return [
            i for i, c in enumerate(matrix.columns)
            if c.model_included and c.name.startswith(prefix)
        ]

    def _svd_plan(self, matrix: FeatureMatrix) -> list[tuple[str, str, list[int], int | None, str]]:
        # (block name, prefix, column indices, requested k, output prefix)
        return [
            ("genome", self.genome_prefix, self._block_columns(matrix, self.genome_prefix),
             self.genome_k, "genome_"),
            ("genre", self.genre_prefix, self._block_columns(matrix, self.genre_prefix),
             self.genre_k, "genre_svd_"),
        ]

    def fit(self, matrix: FeatureMatrix, labels: np.ndarray) -> "ReducerPipeline":
        reduced = self._apply_svd(matrix, fit=True)
        model = reduced.model_view()
        pruned, report = prune_correlated(model, labels, self.corr_threshold)
        self.prune_report = report
        self.dropped_columns = report.dropped_names()
        kept = set(pruned.names)
        self.output_names = [
            c.name for c in reduced.columns if (not c.model_included) or c.name in kept
        ]
        self.fitted = True
        return self

    def transform(self, matrix: FeatureMatrix) -> FeatureMatrix:
        if not self.fitted:
            raise NotFittedError("ReducerPipeline.transform called before fit")
        reduced = self._apply_svd(matrix, fit=False)
        return reduced.select(self.output_names)

    def fit_transform(self, matrix: FeatureMatrix, labels: np.ndarray) -> FeatureMatrix:
        return self.fit(matrix, labels).transform(matrix)

    def _apply_svd(self, matrix: FeatureMatrix, fit: bool) -> FeatureMatrix:
        replaced: dict[int, tuple[list[ColumnMeta], np.ndarray]] = {}
        consumed: set[int] = set()
        for name, prefix, cols, k, out_prefix in self._svd_plan(matrix):
            if not cols or k is None:
                continue
            block = matrix.values[:, cols]
            if fit:
                k_eff = min(k, block.shape[1], block.shape[0])
                self.svd_models[name] = fit_svd(block, k_eff, block_name=name)
            model = self.svd_models.get(name)
            if model is None:
                continue
            projected = model.project(block)
            group = matrix.columns[cols[0]].group
            metas = [ColumnMeta(f"{out_prefix}{i}", group) for i in range(model.k)]
            replaced[cols[0]] = (metas, projected)
            consumed.update(cols)

        out_values: list[np.ndarray] = []
        out_columns: list[ColumnMeta] = []
        for j, col in enumerate(matrix.columns):
            if j in replaced:
                metas, projected = replaced[j]
                out_columns.extend(metas)
                out_values.append(projected)
            elif j in consumed:
                continue
            else:
                out_columns.append(col)
                out_values.append(matrix.values[:, j:j + 1])
        stacked = np.hstack(out_values) if out_values else np.empty((matrix.shape[0], 0))
        return FeatureMatrix(stacked, out_columns, matrix.row_ids, roi=matrix.roi)
