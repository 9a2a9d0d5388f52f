"""Instance-adaptive vote weighting from decision-path flip patterns.

A tree's vote for a sample is weighted by how reliable votes with the same
(forest-probability region, flip pattern, predicted class) triple were on
held-out data, relative to the (region, class) marginal.  The weight table
is a 10 x 6 x 2 array estimated either by stratified cross-validation with
inner forests or from the fitted forest's out-of-bag votes.  By construction
the count-weighted mean weight inside every (region, class) slice is 1, so
the scheme cannot introduce a systematic class bias.

Also here: the naive flip-rate weighting ablation, the boundary mass /
boundary spread applicability indicators, and weight amplification with a
cross-validated strength factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, stratified_kfold
from .forest import (
    ForestModel,
    ForestVotes,
    _as_batch,
    _fit_forest_arrays,
    forest_votes,
    oob_decision_function,
    predict_proba,
)

__all__ = [
    "CvRecords",
    "Indicators",
    "MIN_N",
    "WeightTable",
    "amplify",
    "boundary_mass",
    "boundary_spread",
    "bucket",
    "bucket_array",
    "estimate_weight_table_cv",
    "estimate_weight_table_oob",
    "indicators",
    "predict_naive",
    "predict_weighted",
    "ratio_weights",
    "select_K",
]

MIN_N = 30
N_BUCKETS = 10
N_PATTERNS = 6
N_CLASSES = 2
N_CELLS = N_BUCKETS * N_PATTERNS * N_CLASSES
TABLE_SHAPE = (N_BUCKETS, N_PATTERNS, N_CLASSES)

K_CANDIDATES = (0, 10, 20, 30)
WEIGHT_FLOOR = 0.01
BOUNDARY_LO = 0.4
BOUNDARY_HI = 0.6
SPREAD_MIN_CELL = 10


def bucket(fp: float) -> int:
    """Map a forest probability in [0, 1] to one of 10 equal-width buckets.

    Buckets are half-open except the last: floor(fp * 10) with 1.0 in bucket 9.
    """
    if not np.isfinite(fp) or fp < 0.0 or fp > 1.0:
        raise ValueError(f"forest probability out of range: {fp}")
    return min(int(np.floor(fp * 10.0)), 9)


def bucket_array(fp) -> np.ndarray:
    fp = np.asarray(fp, dtype=np.float64)
    if not np.isfinite(fp).all() or (fp < 0.0).any() or (fp > 1.0).any():
        raise ValueError("forest probabilities out of [0, 1]")
    return np.minimum(np.floor(fp * 10.0).astype(np.int64), 9)


@dataclass
class WeightTable:
    """10 x 6 x 2 correct counts C, totals N, and weights W.

    Where a cell saw fewer than ``min_n`` held-out votes its weight stays at
    the neutral 1.0.  ``provenance`` records seed, fold count and variant.
    """

    C: np.ndarray
    N: np.ndarray
    W: np.ndarray
    min_n: int = MIN_N
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Indicators:
    """Boundary mass M, boundary spread S, and their product."""

    M: float
    S: float
    product: float


@dataclass
class CvRecords:
    """Sufficient statistics to re-score every CV validation sample under any
    weight table: per sample, the per-cell vote count and summed leaf
    distributions (cells flattened to length 120)."""

    y: np.ndarray            # (m,) true labels
    cell_counts: np.ndarray  # (m, 120) float64
    cell_prob: np.ndarray    # (m, 120, 2) float64

    @property
    def n_samples(self) -> int:
        return int(self.y.shape[0])


def ratio_weights(C, N) -> np.ndarray:
    """Pre-fallback weight table: cell accuracy over its (region, class)
    slice-marginal accuracy.  Cells with no observations, and slices whose
    marginal accuracy is zero, get the neutral weight 1."""
    C = np.asarray(C, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    slice_c = C.sum(axis=1, keepdims=True)
    slice_n = N.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        marginal = np.where(slice_n > 0, slice_c / np.maximum(slice_n, 1), 0.0)
        cell_acc = np.where(N > 0, C / np.maximum(N, 1), 0.0)
        W = np.where((N > 0) & (marginal > 0), cell_acc / np.maximum(marginal, 1e-300), 1.0)
    return W


def build_weight_table(C, N, min_n: int = MIN_N, provenance: dict | None = None) -> WeightTable:
    C = np.asarray(C, dtype=np.int64).reshape(TABLE_SHAPE)
    N = np.asarray(N, dtype=np.int64).reshape(TABLE_SHAPE)
    W = np.where(N >= min_n, ratio_weights(C, N), 1.0)
    return WeightTable(C=C, N=N, W=W, min_n=min_n, provenance=provenance or {})


def uniform_table() -> WeightTable:
    """All-ones table; weighted prediction with it reproduces uniform voting."""
    z = np.zeros(TABLE_SHAPE, np.int64)
    return WeightTable(C=z, N=z.copy(), W=np.ones(TABLE_SHAPE), provenance={"variant": "uniform"})


def _child_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1)[0])


def _flat_cells(pb, pat, ci) -> np.ndarray:
    return (pb * N_PATTERNS + pat) * N_CLASSES + ci


def estimate_weight_table_cv(
    train: Dataset,
    T: int,
    seed: int,
    folds: int = 5,
    cv_trees: int | None = None,
) -> tuple[WeightTable, CvRecords]:
    """Estimate the weight table by stratified k-fold CV on the training data.

    Each fold fits an inner forest on the fold-train rows; every held-out
    (tree, sample) vote lands in the cell keyed by the inner forest's
    probability bucket for the tree's predicted class, the leaf's flip
    pattern, and that predicted class.  Returns the table plus the per-sample
    vote statistics needed to re-score the CV predictions under amplified
    tables.  Test data never enters this procedure.
    """
    T_inner = T if cv_trees is None else cv_trees
    plan = stratified_kfold(train, folds, seed=_child_seed(seed, 11))
    m = train.n
    N = np.zeros(N_CELLS, np.int64)
    C = np.zeros(N_CELLS, np.int64)
    cell_counts = np.zeros((m, N_CELLS), np.float64)
    cell_prob = np.zeros((m, N_CELLS, 2), np.float64)

    for k, (tr_idx, val_idx) in enumerate(plan):
        inner = _fit_forest_arrays(
            train.features[tr_idx], train.labels[tr_idx], T_inner, _child_seed(seed, 13, k)
        )
        X_val = train.features[val_idx]
        y_val = train.labels[val_idx]
        votes = forest_votes(inner, X_val)
        proba = votes.leaf_prob.sum(axis=0) / float(T_inner)
        fp = proba[np.arange(val_idx.size)[None, :], votes.ci]
        flat = _flat_cells(bucket_array(fp), votes.pattern.astype(np.int64), votes.ci.astype(np.int64))
        correct = votes.ci == y_val[None, :]
        N += np.bincount(flat.ravel(), minlength=N_CELLS)
        C += np.bincount(flat.ravel(), weights=correct.ravel().astype(np.float64), minlength=N_CELLS).astype(np.int64)
        lin = (val_idx[None, :] * N_CELLS + flat).ravel()
        np.add.at(cell_counts.reshape(-1), lin, 1.0)
        np.add.at(cell_prob.reshape(-1, 2), lin, votes.leaf_prob.reshape(-1, 2))

    table = build_weight_table(
        C, N, provenance={"seed": seed, "folds": folds, "variant": "cv", "trees": T_inner}
    )
    return table, CvRecords(y=train.labels.copy(), cell_counts=cell_counts, cell_prob=cell_prob)


def estimate_weight_table_oob(
    forest: ForestModel, train: Dataset, votes: ForestVotes | None = None
) -> WeightTable:
    """Estimate the weight table from the fitted forest's out-of-bag votes.

    Only (tree, sample) pairs with the sample out of the tree's bootstrap
    contribute; the region bucket uses the sample's out-of-bag probability
    for the tree's predicted class.  Samples with no out-of-bag coverage
    are skipped.  No extra forests are fitted.
    """
    if votes is None:
        votes = forest_votes(forest, train.features)
    oobp, defined = oob_decision_function(forest, train.features, votes=votes)
    mask = (~forest.in_bag) & defined[None, :]
    fp = np.zeros_like(votes.ci, dtype=np.float64)
    rows = np.arange(train.n)[None, :]
    fp[mask] = oobp[np.broadcast_to(rows, mask.shape)[mask], votes.ci[mask]]
    flat = _flat_cells(bucket_array(fp), votes.pattern.astype(np.int64), votes.ci.astype(np.int64))
    correct = votes.ci == train.labels[None, :]
    N = np.bincount(flat[mask], minlength=N_CELLS)
    C = np.bincount(flat[mask], weights=correct[mask].astype(np.float64), minlength=N_CELLS).astype(np.int64)
    return build_weight_table(C, N, provenance={"seed": forest.seed, "variant": "oob"})


def predict_weighted(
    forest: ForestModel,
    table: WeightTable,
    X,
    votes: ForestVotes | None = None,
    base_proba: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted-vote class probability under a weight table.

    Each tree's leaf distribution is scaled by its looked-up weight and the
    total renormalized; the region bucket comes from this forest's own
    uniform-vote probability for the tree's predicted class.  With an
    all-ones table the output is bitwise equal to ``predict_proba``.
    """
    arr, single = _as_batch(forest, X)
    if votes is None:
        votes = forest_votes(forest, arr)
    if base_proba is None:
        base_proba = votes.leaf_prob.sum(axis=0) / float(forest.T)
    fp = base_proba[np.arange(arr.shape[0])[None, :], votes.ci]
    w = table.W[bucket_array(fp), votes.pattern, votes.ci]
    den = w.sum(axis=0)
    if not (den > 0).all():
        raise ValueError("zero total vote weight; weight table is corrupt")
    proba = (w[:, :, None] * votes.leaf_prob).sum(axis=0) / den[:, None]
    return proba[0] if single else proba


def predict_naive(forest: ForestModel, X, votes: ForestVotes | None = None) -> np.ndarray:
    """Flip-rate ablation: weight each vote by one minus its path flip rate.

    No region or class conditioning.  Samples whose every path is fully
    flipping (all weights zero) fall back to the uniform vote.
    """
    arr, single = _as_batch(forest, X)
    if votes is None:
        votes = forest_votes(forest, arr)
    w = 1.0 - votes.flip_rate
    den = w.sum(axis=0)
    dead = den <= 0
    if dead.any():
        w = w.copy()
        w[:, dead] = 1.0
        den = w.sum(axis=0)
    proba = (w[:, :, None] * votes.leaf_prob).sum(axis=0) / den[:, None]
    return proba[0] if single else proba


def _oob_boundary(forest, train, votes):
    if votes is None:
        votes = forest_votes(forest, train.features)
    oobp, defined = oob_decision_function(forest, train.features, votes=votes)
    if not defined.any():
        raise ValueError("no sample has out-of-bag coverage")
    win_prob = np.nanmax(oobp, axis=1)
    boundary = defined & (win_prob >= BOUNDARY_LO) & (win_prob < BOUNDARY_HI)
    return votes, defined, boundary


def boundary_mass(forest: ForestModel, train: Dataset, votes: ForestVotes | None = None) -> float:
    """Fraction of out-of-bag-covered training samples whose winning-class
    probability lies in the boundary window [0.4, 0.6)."""
    _, defined, boundary = _oob_boundary(forest, train, votes)
    return float(boundary.sum() / defined.sum())


def boundary_spread(
    forest: ForestModel,
    train: Dataset,
    votes: ForestVotes | None = None,
    min_cell: int = SPREAD_MIN_CELL,
) -> float:
    """Max minus min per-pattern accuracy over out-of-bag votes on boundary
    samples, averaged over the two predicted-class subgroups.

    Patterns with fewer than ``min_cell`` votes in a subgroup are ignored;
    a subgroup with fewer than two eligible patterns contributes 0.  An
    empty boundary yields 0.
    """
    votes, _, boundary = _oob_boundary(forest, train, votes)
    if not boundary.any():
        return 0.0
    pair_mask = (~forest.in_bag) & boundary[None, :]
    correct = (votes.ci == train.labels[None, :]).astype(np.float64)
    spreads = []
    for cls in (0, 1):
        sub = pair_mask & (votes.ci == cls)
        pats = votes.pattern[sub].astype(np.int64)
        if pats.size == 0:
            spreads.append(0.0)
            continue
        n_pat = np.bincount(pats, minlength=N_PATTERNS)
        c_pat = np.bincount(pats, weights=correct[sub], minlength=N_PATTERNS)
        eligible = n_pat >= min_cell
        if eligible.sum() < 2:
            spreads.append(0.0)
            continue
        acc = c_pat[eligible] / n_pat[eligible]
        spreads.append(float(acc.max() - acc.min()))
    return float(np.mean(spreads))


def indicators(forest: ForestModel, train: Dataset, votes: ForestVotes | None = None) -> Indicators:
    """Boundary mass and spread read off the fitted forest's OOB votes."""
    if votes is None:
        votes = forest_votes(forest, train.features)
    M = boundary_mass(forest, train, votes)
    S = boundary_spread(forest, train, votes)
    return Indicators(M=M, S=S, product=M * S)


def amplify(table: WeightTable, alpha: float) -> WeightTable:
    """Scale every weight's deviation from 1 by ``alpha``, floored at 0.01.

    Neutral cells (w = 1), including sparse-cell fallbacks, stay at 1 for
    any alpha.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    W = np.maximum(1.0 + alpha * (table.W - 1.0), WEIGHT_FLOOR)
    prov = dict(table.provenance)
    prov["alpha"] = float(alpha)
    return WeightTable(C=table.C.copy(), N=table.N.copy(), W=W, min_n=table.min_n, provenance=prov)


def records_accuracy(records: CvRecords, W: np.ndarray) -> float:
    """Accuracy of re-aggregating every recorded CV validation vote under W."""
    flat = np.asarray(W, dtype=np.float64).reshape(N_CELLS)
    num = np.tensordot(records.cell_prob, flat, axes=([1], [0]))  # (m, 2)
    pred = (num[:, 1] > num[:, 0]).astype(np.int8)
    return float((pred == records.y).mean())


def select_K(
    records: CvRecords,
    M: float,
    S: float,
    table: WeightTable,
    candidates=K_CANDIDATES,
) -> int:
    """Choose the amplification factor maximizing CV accuracy.

    Each candidate K maps to alpha = 1 + K * M * S; K = 0 is scored with the
    unamplified table itself so that choosing it reproduces the default
    exactly.  Ties resolve to the smallest K.
    """
    if records.n_samples == 0:
        raise ValueError("empty CV records")
    best_k = None
    best_acc = -1.0
    for K in sorted(int(k) for k in candidates):
        W = table.W if K == 0 else amplify(table, 1.0 + K * M * S).W
        acc = records_accuracy(records, W)
        if acc > best_acc:
            best_acc = acc
            best_k = K
    return best_k
