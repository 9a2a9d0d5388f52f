"""Random forest: bootstrap + sqrt-features training, uniform-vote probability,
out-of-bag decision function, and per-tree vote records.

Per-tree randomness derives from the forest seed through numpy SeedSequence
spawn keys, so training is deterministic and independent per tree.  Batch
operations work on padded (T, capacity) node matrices shared with the numba
kernels; the per-tree views in ``trees`` alias the same memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cart import TreeModel, _tree_from_arrays, max_features_sqrt
from .data import Dataset
from .patterns import FlipPattern, classify_arrays

__all__ = [
    "ForestModel",
    "ForestVotes",
    "VoteRecord",
    "fit_forest",
    "forest_from_json",
    "forest_to_json",
    "forest_votes",
    "oob_decision_function",
    "per_tree_votes",
    "predict_proba",
]


@dataclass
class ForestModel:
    """T bootstrap-trained trees plus their in-bag draw counts.

    ``in_bag_counts[t, i]`` is how many times row i was drawn into tree t's
    bootstrap; the boolean membership mask is ``in_bag``.
    """

    trees: list[TreeModel]
    in_bag_counts: np.ndarray
    n_train: int
    p: int
    seed: int
    max_features: int
    _feature: np.ndarray
    _threshold: np.ndarray
    _left: np.ndarray
    _right: np.ndarray
    _majority: np.ndarray
    _pattern: np.ndarray
    _flip_rate: np.ndarray
    _leaf_prob: np.ndarray
    _n_nodes: np.ndarray

    @property
    def T(self) -> int:
        return len(self.trees)

    @property
    def in_bag(self) -> np.ndarray:
        return self.in_bag_counts > 0


@dataclass(frozen=True)
class VoteRecord:
    """One tree's contribution for one sample."""

    tree_index: int
    leaf_index: int
    ci: int
    pattern: FlipPattern
    leaf_prob: np.ndarray


@dataclass(frozen=True)
class ForestVotes:
    """Stacked per-tree vote fields for a batch of samples (axis 0 = tree)."""

    leaves: np.ndarray      # (T, n) int32
    ci: np.ndarray          # (T, n) int8, argmax of leaf counts (ties to 0)
    pattern: np.ndarray     # (T, n) int8 flip-pattern codes
    leaf_prob: np.ndarray   # (T, n, 2) float64, rows sum to 1
    flip_rate: np.ndarray   # (T, n) float64

    @property
    def T(self) -> int:
        return self.leaves.shape[0]

    @property
    def n(self) -> int:
        return self.leaves.shape[1]


def fit_forest(train: Dataset, T: int, seed: int, max_features: int | None = None) -> ForestModel:
    """Train T Gini CART trees on independent bootstrap resamples of ``train``.

    max_features defaults to the rounded square root of the feature count.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    return _fit_forest_arrays(train.features, train.labels, T, seed, max_features)


def _fit_forest_arrays(X, y, T, seed, max_features=None) -> ForestModel:
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int8)
    n, p = X.shape
    if n == 0:
        raise ValueError("empty training set")
    mf = max_features_sqrt(p) if max_features is None else max_features
    if not 1 <= mf <= p:
        raise ValueError("max_features out of range")

    boot = np.empty((T, n), dtype=np.int64)
    seeds = np.empty(T, dtype=np.uint64)
    in_bag_counts = np.empty((T, n), dtype=np.int32)
    for t in range(T):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(t,))
        rng = np.random.default_rng(ss)
        boot[t] = rng.integers(0, n, size=n, dtype=np.int64)
        seeds[t] = rng.integers(0, 2**64, dtype=np.uint64)
        in_bag_counts[t] = np.bincount(boot[t], minlength=n)

    cap = 2 * n
    feature = np.empty((T, cap), np.int32)
    threshold = np.empty((T, cap), np.float64)
    left = np.empty((T, cap), np.int32)
    right = np.empty((T, cap), np.int32)
    count0 = np.empty((T, cap), np.int64)
    count1 = np.empty((T, cap), np.int64)
    n_nodes = np.empty(T, np.int64)
    _kernels._grow_forest(X, y, boot, mf, seeds, feature, threshold, left, right, count0, count1, n_nodes)

    majority = np.empty((T, cap), np.int8)
    depth = np.empty((T, cap), np.int32)
    kflips = np.empty((T, cap), np.int32)
    first_flip = np.zeros((T, cap), np.int32)
    last_flip = np.zeros((T, cap), np.int32)
    n_rev = np.zeros((T, cap), np.int32)
    _kernels._path_stats_forest(
        feature, left, right, count0, count1, n_nodes,
        majority, depth, kflips, first_flip, last_flip, n_rev,
    )

    d = np.maximum(depth, 1).astype(np.float64)
    pattern = classify_arrays(kflips, first_flip / d, last_flip / d, n_rev)
    pattern[feature >= 0] = -1
    flip_rate = np.where(depth > 0, kflips / d, 0.0)
    flip_rate[feature >= 0] = 0.0
    tot = (count0 + count1).astype(np.float64)
    np.maximum(tot, 1.0, out=tot)
    leaf_prob = np.stack([count0 / tot, count1 / tot], axis=-1)

    trees = []
    for t in range(T):
        m = int(n_nodes[t])
        trees.append(
            TreeModel(
                feature=feature[t, :m],
                threshold=threshold[t, :m],
                left=left[t, :m],
                right=right[t, :m],
                class_counts=np.column_stack([count0[t, :m], count1[t, :m]]),
                majority=majority[t, :m],
                depth=depth[t, :m],
                leaf_pattern=pattern[t, :m],
                leaf_flip_rate=flip_rate[t, :m],
                seed=int(seeds[t]),
            )
        )
    return ForestModel(
        trees=trees,
        in_bag_counts=in_bag_counts,
        n_train=n,
        p=p,
        seed=int(seed),
        max_features=mf,
        _feature=feature,
        _threshold=threshold,
        _left=left,
        _right=right,
        _majority=majority,
        _pattern=pattern,
        _flip_rate=flip_rate,
        _leaf_prob=leaf_prob,
        _n_nodes=n_nodes,
    )


def _as_batch(forest: ForestModel, X) -> tuple[np.ndarray, bool]:
    arr = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != forest.p:
        raise ValueError(f"expected {forest.p} features, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        raise ValueError("features must be finite")
    return arr, single


def forest_votes(forest: ForestModel, X) -> ForestVotes:
    """Apply every tree to every row and gather the cached leaf fields."""
    arr, _ = _as_batch(forest, X)
    leaves = np.empty((forest.T, arr.shape[0]), np.int32)
    _kernels._apply_forest(forest._feature, forest._threshold, forest._left, forest._right, arr, leaves)
    tix = np.arange(forest.T)[:, None]
    return ForestVotes(
        leaves=leaves,
        ci=forest._majority[tix, leaves],
        pattern=forest._pattern[tix, leaves],
        leaf_prob=forest._leaf_prob[tix, leaves],
        flip_rate=forest._flip_rate[tix, leaves],
    )


def predict_proba(forest: ForestModel, X, votes: ForestVotes | None = None) -> np.ndarray:
    """Uniform-vote class probability: mean of per-tree leaf distributions."""
    arr, single = _as_batch(forest, X)
    if votes is None:
        votes = forest_votes(forest, arr)
    proba = votes.leaf_prob.sum(axis=0) / float(forest.T)
    return proba[0] if single else proba


def per_tree_votes(forest: ForestModel, x) -> list[VoteRecord]:
    """One VoteRecord per tree for a single sample."""
    arr, single = _as_batch(forest, x)
    if not single:
        raise ValueError("per_tree_votes takes a single sample")
    v = forest_votes(forest, arr)
    return [
        VoteRecord(
            tree_index=t,
            leaf_index=int(v.leaves[t, 0]),
            ci=int(v.ci[t, 0]),
            pattern=FlipPattern(int(v.pattern[t, 0])),
            leaf_prob=v.leaf_prob[t, 0].copy(),
        )
        for t in range(forest.T)
    ]


def oob_decision_function(forest: ForestModel, X_train, votes: ForestVotes | None = None):
    """Out-of-bag class probability for each training row.

    Row i aggregates only trees whose bootstrap did not draw i.  Returns
    ``(proba, defined)`` where rows with no excluding tree are NaN and
    flagged False in ``defined``.
    """
    arr, _ = _as_batch(forest, X_train)
    if arr.shape[0] != forest.n_train:
        raise ValueError("X_train row count does not match the fitted forest")
    if votes is None:
        votes = forest_votes(forest, arr)
    oob = ~forest.in_bag  # (T, n)
    num = np.einsum("tn,tnc->nc", oob.astype(np.float64), votes.leaf_prob)
    cnt = oob.sum(axis=0).astype(np.float64)
    defined = cnt > 0
    proba = np.full((arr.shape[0], 2), np.nan)
    proba[defined] = num[defined] / cnt[defined, None]
    return proba, defined


def _rle_encode(row: np.ndarray) -> list[int]:
    # flat [value, run, value, run, ...]
    out: list[int] = []
    i = 0
    n = len(row)
    while i < n:
        j = i
        while j < n and row[j] == row[i]:
            j += 1
        out.extend((int(row[i]), j - i))
        i = j
    return out


def _rle_decode(flat: list[int], n: int) -> np.ndarray:
    row = np.empty(n, np.int32)
    pos = 0
    for v, run in zip(flat[::2], flat[1::2]):
        row[pos : pos + run] = v
        pos += run
    return row


def forest_to_json(forest: ForestModel) -> dict:
    """JSON form: tree node arrays, run-length-encoded in-bag counts, seeds."""
    from .cart import tree_to_json

    return {
        "schema": "pawforest.forest.v1",
        "seed": forest.seed,
        "n_train": forest.n_train,
        "p": forest.p,
        "max_features": forest.max_features,
        "trees": [tree_to_json(t) for t in forest.trees],
        "in_bag_rle": [_rle_encode(row) for row in forest.in_bag_counts],
    }


def forest_from_json(obj: dict) -> ForestModel:
    if obj.get("schema") != "pawforest.forest.v1":
        raise ValueError("not a serialized forest")
    n = int(obj["n_train"])
    p = int(obj["p"])
    tree_objs = obj["trees"]
    T = len(tree_objs)
    caps = [len(t["feature"]) for t in tree_objs]
    cap = max(caps)
    feature = np.full((T, cap), -1, np.int32)
    threshold = np.zeros((T, cap), np.float64)
    left = np.full((T, cap), -1, np.int32)
    right = np.full((T, cap), -1, np.int32)
    count0 = np.zeros((T, cap), np.int64)
    count1 = np.zeros((T, cap), np.int64)
    n_nodes = np.array(caps, np.int64)
    seeds = np.empty(T, np.uint64)
    for t, tj in enumerate(tree_objs):
        m = caps[t]
        feature[t, :m] = tj["feature"]
        threshold[t, :m] = tj["threshold"]
        left[t, :m] = tj["left"]
        right[t, :m] = tj["right"]
        counts = np.asarray(tj["class_counts"], np.int64)
        count0[t, :m] = counts[:, 0]
        count1[t, :m] = counts[:, 1]
        seeds[t] = np.uint64(tj["seed"])

    majority = np.empty((T, cap), np.int8)
    depth = np.empty((T, cap), np.int32)
    kflips = np.empty((T, cap), np.int32)
    first_flip = np.zeros((T, cap), np.int32)
    last_flip = np.zeros((T, cap), np.int32)
    n_rev = np.zeros((T, cap), np.int32)
    _kernels._path_stats_forest(
        feature, left, right, count0, count1, n_nodes,
        majority, depth, kflips, first_flip, last_flip, n_rev,
    )
    d = np.maximum(depth, 1).astype(np.float64)
    pattern = classify_arrays(kflips, first_flip / d, last_flip / d, n_rev)
    pattern[feature >= 0] = -1
    flip_rate = np.where(depth > 0, kflips / d, 0.0)
    flip_rate[feature >= 0] = 0.0
    tot = (count0 + count1).astype(np.float64)
    np.maximum(tot, 1.0, out=tot)
    leaf_prob = np.stack([count0 / tot, count1 / tot], axis=-1)

    trees = []
    for t in range(T):
        m = caps[t]
        trees.append(
            TreeModel(
                feature=feature[t, :m], threshold=threshold[t, :m],
                left=left[t, :m], right=right[t, :m],
                class_counts=np.column_stack([count0[t, :m], count1[t, :m]]),
                majority=majority[t, :m], depth=depth[t, :m],
                leaf_pattern=pattern[t, :m], leaf_flip_rate=flip_rate[t, :m],
                seed=int(seeds[t]),
            )
        )
    in_bag_counts = np.stack([_rle_decode(r, n) for r in obj["in_bag_rle"]])
    return ForestModel(
        trees=trees, in_bag_counts=in_bag_counts, n_train=n, p=p,
        seed=int(obj["seed"]), max_features=int(obj["max_features"]),
        _feature=feature, _threshold=threshold, _left=left, _right=right,
        _majority=majority, _pattern=pattern, _flip_rate=flip_rate,
        _leaf_prob=leaf_prob, _n_nodes=n_nodes,
    )
