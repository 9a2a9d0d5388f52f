"""CART decision trees with per-node class counts and cached leaf path patterns.

Trees are grown with Gini impurity to purity (no depth cap, min split size 2),
examining a random subset of features at each node.  Every leaf caches the
flip pattern and flip rate of its root-to-leaf majority-label path, so that
pattern lookup at prediction time is a constant-time array read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .patterns import FlipPattern, classify_arrays

__all__ = [
    "TreeModel",
    "apply",
    "fit_tree",
    "path_label_sequence",
    "precompute_leaf_patterns",
    "tree_from_json",
    "tree_to_json",
]


@dataclass
class TreeModel:
    """Array-encoded binary classification tree.

    ``feature`` is -1 at leaves; ``left``/``right`` are child node ids.
    ``class_counts[i]`` holds the training-sample class counts at node i,
    and conservation holds at every internal node: parent counts equal the
    sum of its children's.  ``leaf_pattern`` / ``leaf_flip_rate`` are -1 / 0
    on internal nodes and valid on leaves; ``majority`` is the per-node
    argmax class (ties to class 0).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    class_counts: np.ndarray
    majority: np.ndarray
    depth: np.ndarray
    leaf_pattern: np.ndarray
    leaf_flip_rate: np.ndarray
    seed: int
    parent: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.n_nodes
        parent = np.full(n, -1, dtype=np.int32)
        internal = np.flatnonzero(self.feature >= 0)
        parent[self.left[internal]] = internal
        parent[self.right[internal]] = internal
        self.parent = parent

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def leaf_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_leaf)

    @property
    def leaf_majority(self) -> np.ndarray:
        """Per-node majority class; meaningful at leaf indices."""
        return self.majority

    @property
    def leaf_prob(self) -> np.ndarray:
        """Per-node class distribution (counts normalized to sum 1)."""
        tot = self.class_counts.sum(axis=1, keepdims=True)
        return self.class_counts / np.maximum(tot, 1)


def _derive_u64(seed, *key) -> np.uint64:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return ss.generate_state(1, np.uint64)[0]


def max_features_sqrt(p: int) -> int:
    """Round-half-up square root of the feature count, clamped to [1, p]."""
    return max(1, min(p, int(math.floor(math.sqrt(p) + 0.5))))


def fit_tree(X, y, max_features: int, seed: int) -> TreeModel:
    """Grow one Gini CART tree on (X, y); deterministic for a given seed.

    Splits to purity or until no sampled feature varies inside a node; a
    mixed-label node whose features are all constant becomes a majority
    leaf (ties to class 0).
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int8)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be non-empty (n, p) with matching y")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if not 1 <= max_features <= X.shape[1]:
        raise ValueError("max_features must be in [1, p]")
    n = X.shape[0]
    cap = 2 * n
    feature = np.empty(cap, np.int32)
    threshold = np.empty(cap, np.float64)
    left = np.empty(cap, np.int32)
    right = np.empty(cap, np.int32)
    count0 = np.empty(cap, np.int64)
    count1 = np.empty(cap, np.int64)
    boot = np.arange(n, dtype=np.int64)
    n_nodes = _kernels._grow_tree(
        X, y, boot, max_features, _derive_u64(seed),
        feature, threshold, left, right, count0, count1,
    )
    return _tree_from_arrays(
        feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
        left[:n_nodes].copy(), right[:n_nodes].copy(),
        count0[:n_nodes].copy(), count1[:n_nodes].copy(), seed,
    )


def _tree_from_arrays(feature, threshold, left, right, count0, count1, seed) -> TreeModel:
    n_nodes = feature.shape[0]
    majority = np.empty(n_nodes, np.int8)
    depth = np.empty(n_nodes, np.int32)
    kflips = np.empty(n_nodes, np.int32)
    first_flip = np.zeros(n_nodes, np.int32)
    last_flip = np.zeros(n_nodes, np.int32)
    n_rev = np.zeros(n_nodes, np.int32)
    _kernels._path_stats_tree(
        feature, left, right, count0, count1, n_nodes,
        majority, depth, kflips, first_flip, last_flip, n_rev,
    )
    pattern, rate = _pattern_arrays(feature, depth, kflips, first_flip, last_flip, n_rev)
    return TreeModel(
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        class_counts=np.column_stack([count0, count1]),
        majority=majority,
        depth=depth,
        leaf_pattern=pattern,
        leaf_flip_rate=rate,
        seed=int(seed),
    )


def _pattern_arrays(feature, depth, kflips, first_flip, last_flip, n_rev):
    """Leaf pattern codes and flip rates from integer path statistics.

    Positions normalize as flip_depth / path_depth, matching flip_stats; a
    depth-0 leaf is NOFLIP with rate 0.
    """
    d = np.maximum(depth, 1).astype(np.float64)
    f1 = first_flip / d
    fk = last_flip / d
    pattern = classify_arrays(kflips, f1, fk, n_rev)
    pattern[feature >= 0] = -1
    rate = np.where(depth > 0, kflips / d, 0.0)
    rate[feature >= 0] = 0.0
    return pattern, rate


def precompute_leaf_patterns(tree: TreeModel) -> TreeModel:
    """Recompute and cache per-leaf patterns in one depth-first traversal.

    Fitting already does this; the operation is idempotent and is the same
    code path used after deserialization.
    """
    n_nodes = tree.n_nodes
    majority = np.empty(n_nodes, np.int8)
    depth = np.empty(n_nodes, np.int32)
    kflips = np.empty(n_nodes, np.int32)
    first_flip = np.zeros(n_nodes, np.int32)
    last_flip = np.zeros(n_nodes, np.int32)
    n_rev = np.zeros(n_nodes, np.int32)
    _kernels._path_stats_tree(
        np.ascontiguousarray(tree.feature), np.ascontiguousarray(tree.left),
        np.ascontiguousarray(tree.right),
        np.ascontiguousarray(tree.class_counts[:, 0]),
        np.ascontiguousarray(tree.class_counts[:, 1]), n_nodes,
        majority, depth, kflips, first_flip, last_flip, n_rev,
    )
    pattern, rate = _pattern_arrays(tree.feature, depth, kflips, first_flip, last_flip, n_rev)
    tree.majority = majority
    tree.depth = depth
    tree.leaf_pattern = pattern
    tree.leaf_flip_rate = rate
    return tree


def apply(tree: TreeModel, x) -> int | np.ndarray:
    """Leaf index reached by threshold routing; value equal to the threshold
    goes left.  Accepts a single vector (p,) or a batch (n, p)."""
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if not np.isfinite(arr).all():
        raise ValueError("features must be finite")
    out = np.empty(arr.shape[0], np.int32)
    _kernels._apply_tree(
        np.ascontiguousarray(tree.feature), np.ascontiguousarray(tree.threshold),
        np.ascontiguousarray(tree.left), np.ascontiguousarray(tree.right), arr, out,
    )
    return int(out[0]) if single else out


def path_label_sequence(tree: TreeModel, leaf: int) -> np.ndarray:
    """Majority-class labels along the root-to-leaf path (length depth + 1)."""
    if not 0 <= leaf < tree.n_nodes or tree.feature[leaf] >= 0:
        raise ValueError(f"node {leaf} is not a leaf of this tree")
    chain = []
    node = leaf
    while node >= 0:
        chain.append(tree.majority[node])
        node = tree.parent[node]
    return np.array(chain[::-1], dtype=np.int8)


def leaf_pattern_of(tree: TreeModel, leaf: int) -> FlipPattern:
    """Cached flip pattern of a leaf."""
    if not 0 <= leaf < tree.n_nodes or tree.feature[leaf] >= 0:
        raise ValueError(f"node {leaf} is not a leaf of this tree")
    return FlipPattern(int(tree.leaf_pattern[leaf]))


def tree_to_json(tree: TreeModel) -> dict:
    """Self-describing JSON form: node arrays plus the growing seed."""
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "class_counts": tree.class_counts.tolist(),
        "seed": int(tree.seed),
    }


def tree_from_json(obj: dict) -> TreeModel:
    counts = np.asarray(obj["class_counts"], dtype=np.int64)
    return _tree_from_arrays(
        np.asarray(obj["feature"], dtype=np.int32),
        np.asarray(obj["threshold"], dtype=np.float64),
        np.asarray(obj["left"], dtype=np.int32),
        np.asarray(obj["right"], dtype=np.int32),
        np.ascontiguousarray(counts[:, 0]),
        np.ascontiguousarray(counts[:, 1]),
        int(obj["seed"]),
    )
