"""Binary random-forest classifier built from first principles.

Each tree is grown on a bootstrap sample (n draws with replacement) with a
fresh random feature subset of size max_features at every node. Splits
minimize weighted child Gini impurity over thresholds placed at midpoints
of consecutive distinct sorted values; ties break toward the lower feature
index, then the lower threshold. Leaves store the positive-class fraction
of their bootstrap samples and the forest prediction is the mean of leaf
fractions across trees.

Instead of comparing weighted impurities directly, candidate splits are
ranked by the equivalent key

    K = (n_r * (pos_l^2 + neg_l^2) + n_l * (pos_r^2 + neg_r^2)) / (n_l * n_r)

(weighted Gini = 1 - K/n, so maximizing K minimizes impurity). K is an
exact integer ratio rounded once to a double, so mathematically equal
candidates compare equal and the tie rule is bit-reproducible. The final
"strictly reduces impurity" gate is evaluated in exact integer arithmetic.
Counts above ~1e5 rows would start losing that exactness; this is far
beyond the corpus scale.

Determinism: tree t draws from an RNG stream seeded by (config.seed, t),
so results are independent of training parallelism or row order (rows are
canonicalized by sorted row ids when ids are provided).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import TrainingError

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RfConfig:
    """Forest hyperparameters. min_samples_split is a fraction of the
    training-set size below which a node is not considered for splitting."""

    n_estimators: int = 500
    max_features: int = 14
    max_depth: int = 40
    min_samples_split: float = 0.05
    min_samples_leaf: int = 5
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.min_samples_split <= 1.0:
            raise ValueError("min_samples_split must be a fraction in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not self.bootstrap:
            raise ValueError("this forest always trains on bootstrap samples")


@dataclass
class TreeNode:
    """Internal node (feature_index, threshold, children) or leaf
    (positive_fraction, sample_count)."""

    feature_index: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    positive_fraction: float = 0.0
    sample_count: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature_index < 0


@dataclass
class FlatTree:
    """Array form of one tree (preorder) for vectorized routing."""

    feature: np.ndarray   # int32, -1 at leaves
    threshold: np.ndarray  # float64: split threshold, or leaf positive fraction
    count: np.ndarray     # int32: leaf sample count (0 at internal nodes)
    left: np.ndarray      # int32 child indices, -1 at leaves
    right: np.ndarray

    def node(self, i: int = 0) -> TreeNode:
        """Rebuild the linked TreeNode view rooted at node i."""
        if self.feature[i] < 0:
            return TreeNode(positive_fraction=float(self.threshold[i]),
                            sample_count=int(self.count[i]))
        return TreeNode(
            feature_index=int(self.feature[i]),
            threshold=float(self.threshold[i]),
            left=self.node(int(self.left[i])),
            right=self.node(int(self.right[i])),
        )

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        """Positive fraction of the leaf each row lands in (left iff <=)."""
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feats = self.feature[idx]
            active = feats >= 0
            if not active.any():
                break
            rows = np.nonzero(active)[0]
            node_ids = idx[rows]
            go_left = X[rows, feats[rows]] <= self.threshold[node_ids]
            idx[rows] = np.where(go_left, self.left[node_ids], self.right[node_ids])
        return self.threshold[idx]


def gini(pos: int, neg: int) -> float:
    """Gini impurity 1 - p^2 - (1-p)^2 of a two-class node."""
    total = pos + neg
    if total < 1:
        raise ValueError("gini undefined for an empty node")
    p = pos / total
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    candidate_features: Sequence[int],
    min_samples_leaf: int = 1,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gain) over the candidates, or None.

    Thresholds sit at midpoints of consecutive distinct sorted values.
    Both children must hold >= min_samples_leaf rows and the split must
    strictly reduce impurity. Ties prefer the lower feature index, then
    the lower threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = y.size
    pos_total = int(y.sum())
    neg_total = n - pos_total

    best: tuple[float, int, float, int, int, int] | None = None
    for f in sorted(int(c) for c in candidate_features):
        values = X[:, f]
        order = np.argsort(values, kind="stable")
        sv = values[order]
        sy = y[order]
        boundaries = np.nonzero(sv[1:] != sv[:-1])[0]
        if boundaries.size == 0:
            continue
        n_left = boundaries + 1
        n_right = n - n_left
        admissible = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        if not admissible.any():
            continue
        pos_left = np.cumsum(sy)[boundaries]
        neg_left = n_left - pos_left
        pos_right = pos_total - pos_left
        neg_right = neg_total - neg_left
        a = pos_left * pos_left + neg_left * neg_left
        b = pos_right * pos_right + neg_right * neg_right
        key_num = n_right * a + n_left * b
        key = key_num.astype(np.float64) / (n_left * n_right).astype(np.float64)
        key[~admissible] = -np.inf
        j = int(np.argmax(key))  # first max: lowest threshold wins ties
        if best is None or key[j] > best[0]:
            threshold = (sv[boundaries[j]] + sv[boundaries[j] + 1]) / 2.0
            best = (float(key[j]), f, float(threshold),
                    int(key_num[j]), int(n_left[j]), int(n_right[j]))

    if best is None:
        return None
    key_value, feature, threshold, key_num, n_l, n_r = best
    parent_sq = pos_total * pos_total + neg_total * neg_total
    # exact integer check that weighted child impurity < parent impurity
    if not key_num * n > parent_sq * n_l * n_r:
        return None
    parent_gini = 1.0 - parent_sq / (n * n)
    weighted = 1.0 - key_value / n
    return feature, threshold, parent_gini - weighted


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed & _SEED_MASK, tree_index])


class _TreeBuilder:
    def __init__(self, X, y, cfg: RfConfig, min_split_count: int, rng):
        self.X = X
        self.y = y
        self.cfg = cfg
        self.min_split_count = min_split_count
        self.rng = rng
        self.n_features = X.shape[1]
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.count: list[int] = []
        self.left: list[int] = []
        self.right: list[int] = []

    def build(self, sample_idx: np.ndarray) -> FlatTree:
        self._grow(sample_idx, depth=0)
        return FlatTree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            count=np.array(self.count, dtype=np.int32),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
        )

    def _emit(self, feature, threshold, count) -> int:
        i = len(self.feature)
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.count.append(count)
        self.left.append(-1)
        self.right.append(-1)
        return i

    def _grow(self, sample_idx: np.ndarray, depth: int) -> int:
        y_node = self.y[sample_idx]
        n_node = y_node.size
        pos = int(y_node.sum())

        split = None
        if (
            depth < self.cfg.max_depth
            and n_node >= self.min_split_count
            and n_node >= 2 * self.cfg.min_samples_leaf
            and 0 < pos < n_node
        ):
            k = min(self.cfg.max_features, self.n_features)
            candidates = self.rng.choice(self.n_features, size=k, replace=False)
            split = best_split(
                self.X[sample_idx], y_node, candidates, self.cfg.min_samples_leaf
            )

        if split is None:
            return self._emit(-1, pos / n_node, n_node)

        feature, threshold, _ = split
        node = self._emit(feature, threshold, 0)
        goes_left = self.X[sample_idx, feature] <= threshold
        self.left[node] = self._grow(sample_idx[goes_left], depth + 1)
        self.right[node] = self._grow(sample_idx[~goes_left], depth + 1)
        return node


@dataclass
class Forest:
    """Trained ensemble; immutable once fitted."""

    trees: list[FlatTree]
    config: RfConfig
    feature_names: list[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check_width(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"row width {X.shape[1]} does not match the fitted width {self.n_features}"
            )
        return X

    def predict_proba(self, X) -> np.ndarray | float:
        """Mean over trees of the reached leaf's positive fraction."""
        single = np.asarray(X).ndim == 1
        X = self._check_width(X)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.leaf_values(X)
        probs = total / len(self.trees)
        return float(probs[0]) if single else probs

    def predict(self, X, threshold: float = 0.5) -> np.ndarray | int:
        """Label 1 iff the positive probability strictly exceeds threshold."""
        probs = self.predict_proba(X)
        if isinstance(probs, float):
            return int(probs > threshold)
        return (probs > threshold).astype(np.int64)


def fit(
    X,
    labels,
    config: RfConfig,
    feature_names: Sequence[str] | None = None,
    row_ids: Sequence[str] | None = None,
) -> Forest:
    """Train a forest. Providing row_ids canonicalizes row order (sorted by
    id) so bootstrap draws are invariant to input permutation."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be 2-D with one label per row")
    n, p = X.shape
    if n < 2:
        raise TrainingError("need at least 2 training rows")
    if not (0 < int(y.sum()) < n):
        raise TrainingError("training labels contain a single class")
    if config.max_features > p:
        raise ValueError(f"max_features={config.max_features} exceeds feature count {p}")
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(p)]
    if len(feature_names) != p:
        raise ValueError("feature_names length must match the matrix width")

    if row_ids is not None:
        if len(row_ids) != n:
            raise ValueError("row_ids length must match the matrix height")
        order = np.array(sorted(range(n), key=lambda i: row_ids[i]), dtype=np.int64)
        X = X[order]
        y = y[order]

    min_split_count = max(2, math.ceil(config.min_samples_split * n))
    trees = []
    for t in range(config.n_estimators):
        rng = _tree_rng(config.seed, t)
        sample_idx = rng.integers(0, n, size=n)
        builder = _TreeBuilder(X, y, config, min_split_count, rng)
        trees.append(builder.build(sample_idx))
    return Forest(trees=trees, config=config, feature_names=list(feature_names))


def forest_to_arrays(forest: Forest) -> dict[str, np.ndarray]:
    """Serialize to preorder arrays: internal nodes carry (feature,
    threshold), leaves carry (positive_fraction, sample_count)."""
    sizes = np.array([t.feature.size for t in forest.trees], dtype=np.int64)
    return {
        "tree_sizes": sizes,
        "feature": np.concatenate([t.feature for t in forest.trees]).astype(np.int32),
        "payload": np.concatenate([t.threshold for t in forest.trees]),
        "count": np.concatenate([t.count for t in forest.trees]).astype(np.int32),
    }


def _rebuild_children(feature: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Recover left/right child indices from a preorder node list."""
    n = feature.size
    left = np.full(n, -1, dtype=np.int32)
    right = np.full(n, -1, dtype=np.int32)

    def walk(i: int) -> int:
        """Return the index just past the subtree rooted at i."""
        if feature[i] < 0:
            return i + 1
        left[i] = i + 1
        after_left = walk(i + 1)
        right[i] = after_left
        return walk(after_left)

    pos = 0
    while pos < n:
        pos = walk(pos)
    return left, right


def forest_from_arrays(
    arrays: dict[str, np.ndarray], config: RfConfig, feature_names: Sequence[str]
) -> Forest:
    """Inverse of forest_to_arrays."""
    sizes = arrays["tree_sizes"]
    feature = np.asarray(arrays["feature"], dtype=np.int32)
    payload = np.asarray(arrays["payload"], dtype=np.float64)
    count = np.asarray(arrays["count"], dtype=np.int32)
    trees = []
    offset = 0
    for size in sizes:
        size = int(size)
        f = feature[offset:offset + size]
        left, right = _rebuild_children(f)
        trees.append(
            FlatTree(
                feature=f.copy(),
                threshold=payload[offset:offset + size].copy(),
                count=count[offset:offset + size].copy(),
                left=left,
                right=right,
            )
        )
        offset += size
    return Forest(trees=trees, config=config, feature_names=list(feature_names))
