"""Comparator aggregation schemes sharing one fitted forest.

WRF assigns each tree a static weight proportional to the inverse of its
out-of-bag error.  The two KNORA schemes judge trees by their accuracy on
the k nearest training neighbours of the query point: KNORA-Eliminate keeps
only trees correct on every neighbour (shrinking the neighbourhood until
some tree qualifies), KNORA-Union weights trees by their correct-neighbour
count.  Tree correctness always means the tree's own leaf-majority call,
never the forest's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .forest import ForestModel, ForestVotes, _as_batch, forest_votes

__all__ = [
    "NeighborIndex",
    "StaticWeights",
    "build_neighbor_index",
    "knora_e_predict",
    "knora_u_predict",
    "wrf_predict",
    "wrf_weights",
]

DEFAULT_K = 7


@dataclass(frozen=True)
class StaticWeights:
    """Per-tree aggregation weights, normalized to mean 1."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if not np.isfinite(w).all() or (w < 0).any() or not (w > 0).any():
            raise ValueError("weights must be finite, non-negative, not all zero")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class NeighborIndex:
    """Exact Euclidean nearest-neighbour lookup over the training rows."""

    features: np.ndarray
    labels: np.ndarray
    k: int = DEFAULT_K

    def query(self, X) -> np.ndarray:
        """Indices of the k nearest training rows per query row, by distance
        then by row index; returns (nq, min(k, n)) int64."""
        Q = np.atleast_2d(np.asarray(X, dtype=np.float64))
        d2 = ((Q[:, None, :] - self.features[None, :, :]) ** 2).sum(axis=2)
        kk = min(self.k, self.features.shape[0])
        order = np.argsort(d2, axis=1, kind="stable")
        return order[:, :kk]


def build_neighbor_index(train: Dataset, k: int = DEFAULT_K) -> NeighborIndex:
    if k < 1:
        raise ValueError("k must be at least 1")
    if train.n == 0:
        raise ValueError("empty training set")
    return NeighborIndex(features=train.features, labels=train.labels, k=k)


def _weights_from_oob_accuracy(acc: np.ndarray, n_oob: np.ndarray) -> np.ndarray:
    """Inverse-OOB-error weights, error floored at 1/(n_oob + 1), normalized
    to mean 1 over covered trees; trees without OOB rows stay at exactly 1."""
    acc = np.asarray(acc, dtype=np.float64)
    n_oob = np.asarray(n_oob, dtype=np.int64)
    covered = n_oob > 0
    w = np.ones_like(acc)
    if covered.any():
        err = np.maximum(1.0 - acc[covered], 1.0 / (n_oob[covered] + 1.0))
        raw = 1.0 / err
        w[covered] = raw / raw.mean()
    return w


def wrf_weights(forest: ForestModel, train: Dataset, votes: ForestVotes | None = None) -> StaticWeights:
    """Static per-tree weights from each tree's accuracy on its own
    out-of-bag training rows."""
    if votes is None:
        votes = forest_votes(forest, train.features)
    oob = ~forest.in_bag
    hits = (votes.ci == train.labels[None, :]) & oob
    n_oob = oob.sum(axis=1)
    with np.errstate(invalid="ignore"):
        acc = np.where(n_oob > 0, hits.sum(axis=1) / np.maximum(n_oob, 1), 0.0)
    return StaticWeights(w=_weights_from_oob_accuracy(acc, n_oob))


def wrf_predict(forest: ForestModel, weights: StaticWeights, X, votes: ForestVotes | None = None) -> np.ndarray:
    """Static-weight aggregation of the per-tree leaf distributions."""
    arr, single = _as_batch(forest, X)
    if votes is None:
        votes = forest_votes(forest, arr)
    w = weights.w
    proba = np.tensordot(w, votes.leaf_prob, axes=([0], [0])) / w.sum()
    return proba[0] if single else proba


def _tree_correct_matrix(forest: ForestModel, index: NeighborIndex) -> np.ndarray:
    votes = forest_votes(forest, index.features)
    return votes.ci == index.labels[None, :]


def knora_e_predict(
    forest: ForestModel,
    index: NeighborIndex,
    X,
    votes: ForestVotes | None = None,
    correct: np.ndarray | None = None,
) -> np.ndarray:
    """Uniform vote over the trees correct on all k nearest neighbours.

    When no tree survives, the neighbourhood shrinks one neighbour at a time;
    if it empties entirely the full ensemble votes.
    """
    arr, single = _as_batch(forest, X)
    if votes is None:
        votes = forest_votes(forest, arr)
    if correct is None:
        correct = _tree_correct_matrix(forest, index)
    nb = index.query(arr)
    proba = np.empty((arr.shape[0], 2))
    for q in range(arr.shape[0]):
        survivors = None
        for kk in range(nb.shape[1], 0, -1):
            ok = correct[:, nb[q, :kk]].all(axis=1)
            if ok.any():
                survivors = ok
                break
        if survivors is None:
            proba[q] = votes.leaf_prob[:, q].sum(axis=0) / float(forest.T)
        else:
            proba[q] = votes.leaf_prob[survivors, q].sum(axis=0) / survivors.sum()
    return proba[0] if single else proba


def knora_u_predict(
    forest: ForestModel,
    index: NeighborIndex,
    X,
    votes: ForestVotes | None = None,
    correct: np.ndarray | None = None,
) -> np.ndarray:
    """Vote weighted by each tree's count of correctly classified neighbours;
    all-zero counts fall back to the uniform vote."""
    arr, single = _as_batch(forest, X)
    if votes is None:
        votes = forest_votes(forest, arr)
    if correct is None:
        correct = _tree_correct_matrix(forest, index)
    nb = index.query(arr)
    # counts[t, q] = number of q's neighbours tree t gets right
    counts = correct[:, nb].sum(axis=2).astype(np.float64)
    den = counts.sum(axis=0)
    dead = den <= 0
    if dead.any():
        counts[:, dead] = 1.0
        den = counts.sum(axis=0)
    proba = (counts[:, :, None] * votes.leaf_prob).sum(axis=0) / den[:, None]
    return proba[0] if single else proba
