"""Dataset ingestion, stratified splitting/folding, and 2-D synthetic geometries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

__all__ = [
    "Dataset",
    "SplitPlan",
    "gen_synthetic",
    "load_csv",
    "save_csv",
    "stratified_kfold",
    "stratified_split",
]

SYNTHETIC_KINDS = ("diagonal", "moons", "circles", "overlap")

# frozen defaults for the synthetic geometries; all overridable per call
_SYNTH_NOISE_DEFAULTS = {"diagonal": 0.05, "moons": 0.25, "circles": 0.10, "overlap": 0.0}


@dataclass(frozen=True)
class Dataset:
    """Binary-classification table: real features (n, p), labels in {0, 1}.

    ``minority_class`` is the label with strictly fewer occurrences (ties
    resolve to class 1).  Instances are immutable and safe to share across
    threads.
    """

    name: str
    features: np.ndarray
    labels: np.ndarray
    minority_class: int
    feature_names: tuple[str, ...] | None = None
    label_names: tuple[str, str] | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int8))
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("features must be (n, p) and labels (n,)")
        if X.shape[0] == 0:
            raise ValueError("dataset is empty")
        if not np.isfinite(X).all():
            raise ValueError(f"{self.name}: non-finite feature values")
        uniq = np.unique(y)
        if not np.array_equal(uniq, [0, 1]):
            raise ValueError(f"{self.name}: labels must contain both 0 and 1 and nothing else")
        n1 = int((y == 1).sum())
        expected_minority = 1 if n1 <= y.size - n1 else 0
        if self.minority_class != expected_minority:
            raise ValueError(f"{self.name}: minority_class does not match label counts")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise ValueError("feature_names length mismatch")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_arrays(cls, name, X, y, feature_names=None, label_names=None) -> "Dataset":
        """Build a Dataset, computing minority_class from label counts."""
        y = np.asarray(y, dtype=np.int8)
        n1 = int((y == 1).sum())
        minority = 1 if n1 <= y.size - n1 else 0
        return cls(
            name=name,
            features=np.asarray(X, dtype=np.float64),
            labels=y,
            minority_class=minority,
            feature_names=tuple(feature_names) if feature_names is not None else None,
            label_names=tuple(label_names) if label_names is not None else None,
        )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=2)

    def minority_fraction(self) -> float:
        return float(self.class_counts()[self.minority_class] / self.n)

    def take(self, indices, suffix: str = "") -> "Dataset":
        """Row subset as a new Dataset (minority_class recomputed)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset.from_arrays(
            self.name + suffix,
            self.features[idx],
            self.labels[idx],
            feature_names=self.feature_names,
            label_names=self.label_names,
        )


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/test row indices produced by a stratified split."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


def load_csv(path, label_column, positive_label: str | None = None, name: str | None = None) -> Dataset:
    """Load a headered CSV into a Dataset.

    ``label_column`` may be a column name or a 0-based index.  Raw label
    values are mapped to {0, 1} with the lexicographically smaller value
    becoming 0, unless ``positive_label`` overrides which value maps to 1.
    All other columns must be numeric and finite; missing values are
    rejected rather than imputed.
    """
    path = Path(path)
    df = pd.read_csv(path)
    if isinstance(label_column, int) and label_column not in df.columns:
        if not -df.shape[1] <= label_column < df.shape[1]:
            raise ValueError(f"label column index {label_column} out of range")
        label_column = df.columns[label_column]
    if label_column not in df.columns:
        raise ValueError(f"label column {label_column!r} not found in {path.name}")

    raw = df[label_column].astype(str)
    values = sorted(raw.unique())
    if len(values) < 2:
        raise ValueError(f"{path.name}: need 2 distinct labels, found {len(values)}")
    if len(values) > 2:
        raise ValueError(f"{path.name}: binary only, found {len(values)} label values: {values}")
    if positive_label is not None:
        positive_label = str(positive_label)
        if positive_label not in values:
            raise ValueError(f"positive label {positive_label!r} not among {values}")
        negative = values[0] if values[1] == positive_label else values[1]
        mapping = {negative: 0, positive_label: 1}
    else:
        mapping = {values[0]: 0, values[1]: 1}
    y = raw.map(mapping).to_numpy(dtype=np.int8)

    feat = df.drop(columns=[label_column])
    for col in feat.columns:
        converted = pd.to_numeric(feat[col], errors="coerce")
        bad = converted.isna() & feat[col].notna()
        if bad.any():
            raise ValueError(f"{path.name}: non-numeric value in column {col!r}")
        if converted.isna().any():
            raise ValueError(f"{path.name}: missing value in column {col!r}")
        feat[col] = converted
    X = feat.to_numpy(dtype=np.float64)

    inv = {v: k for k, v in mapping.items()}
    return Dataset.from_arrays(
        name or path.stem,
        X,
        y,
        feature_names=tuple(feat.columns),
        label_names=(inv[0], inv[1]),
    )


def save_csv(ds: Dataset, path) -> None:
    """Re-emit a Dataset as a canonical headered CSV (numeric features + label)."""
    cols = ds.feature_names or tuple(f"x{i}" for i in range(ds.p))
    df = pd.DataFrame(ds.features, columns=list(cols))
    if ds.label_names is not None:
        df["label"] = [ds.label_names[v] for v in ds.labels]
    else:
        df["label"] = ds.labels
    df.to_csv(path, index=False)


def _round_half_down(x: float) -> int:
    return int(math.ceil(x - 0.5))


def _test_counts_per_class(class_counts: np.ndarray, test_fraction: float) -> np.ndarray:
    """Per-class test-set sizes: global round-half-down target, per-class
    floors, remainders to the largest classes first (ties to lower label)."""
    n = int(class_counts.sum())
    target = _round_half_down(n * test_fraction)
    floors = np.floor(class_counts * test_fraction).astype(np.int64)
    remainder = target - int(floors.sum())
    order = sorted(range(len(class_counts)), key=lambda c: (-class_counts[c], c))
    for i in range(remainder):
        floors[order[i % len(order)]] += 1
    return floors


def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> SplitPlan:
    """Deterministic stratified train/test split preserving class proportions."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    counts = ds.class_counts()
    if (counts < 2).any():
        raise ValueError("each class needs at least 2 samples to split")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    test_counts = _test_counts_per_class(counts, test_fraction)
    test_parts, train_parts = [], []
    for c in (0, 1):
        idx = np.flatnonzero(ds.labels == c)
        perm = rng.permutation(idx)
        test_parts.append(perm[: test_counts[c]])
        train_parts.append(perm[test_counts[c] :])
    return SplitPlan(
        train_indices=np.sort(np.concatenate(train_parts)),
        test_indices=np.sort(np.concatenate(test_parts)),
        seed=seed,
    )


def stratified_kfold(ds: Dataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic stratified k-fold partition of all rows.

    Validation folds are disjoint and cover every row, each class balanced
    within one row per fold.  Per-class remainders are handed out round-robin
    with a fold cursor that carries across classes, keeping overall fold
    sizes within one row of each other.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    counts = ds.class_counts()
    if (counts < k).any():
        raise ValueError(f"each class needs at least k={k} samples")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    fold_members: list[list[np.ndarray]] = [[] for _ in range(k)]
    cursor = 0
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(ds.labels == c))
        base, rem = divmod(len(idx), k)
        sizes = np.full(k, base, dtype=np.int64)
        for j in range(rem):
            sizes[(cursor + j) % k] += 1
        cursor = (cursor + rem) % k
        offset = 0
        for f in range(k):
            fold_members[f].append(idx[offset : offset + sizes[f]])
            offset += sizes[f]
    all_idx = np.arange(ds.n)
    folds = []
    for f in range(k):
        val = np.sort(np.concatenate(fold_members[f]))
        mask = np.ones(ds.n, dtype=bool)
        mask[val] = False
        folds.append((all_idx[mask], val))
    return folds


def gen_synthetic(kind: str, n: int, noise: float | None = None, seed: int = 0) -> Dataset:
    """Generate a 2-D binary dataset with a known decision-boundary geometry.

    Kinds: ``diagonal`` (linear boundary x0 + x1 = 1 on the unit square),
    ``moons`` (two interleaving half-circles), ``circles`` (nested rings of
    radius 0.5 and 1.0), ``overlap`` (two unit-variance Gaussians with means
    2 apart).  ``noise`` is the std of Gaussian feature jitter added after
    the labels are assigned; per-kind defaults apply when None.  Class
    balance is 50/50 within one sample and output is deterministic per seed.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    if n < 20:
        raise ValueError("n must be at least 20")
    if noise is None:
        noise = _SYNTH_NOISE_DEFAULTS[kind]
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n1 = n // 2
    n0 = n - n1

    if kind == "diagonal":
        pts = {0: [], 1: []}
        need = {0: n0, 1: n1}
        while need[0] > 0 or need[1] > 0:
            cand = rng.uniform(0.0, 1.0, size=(2 * n, 2))
            side = cand[:, 0] + cand[:, 1] - 1.0
            for c, mask in ((0, side < 0), (1, side > 0)):
                takeable = cand[mask][: need[c]]
                if takeable.size:
                    pts[c].append(takeable)
                    need[c] -= takeable.shape[0]
        X = np.concatenate([np.concatenate(pts[0]), np.concatenate(pts[1])])
        y = np.concatenate([np.zeros(n0, np.int8), np.ones(n1, np.int8)])
    elif kind == "moons":
        t0 = rng.uniform(0.0, np.pi, n0)
        t1 = rng.uniform(0.0, np.pi, n1)
        outer = np.column_stack([np.cos(t0), np.sin(t0)])
        inner = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
        X = np.concatenate([outer, inner])
        y = np.concatenate([np.zeros(n0, np.int8), np.ones(n1, np.int8)])
    elif kind == "circles":
        t0 = rng.uniform(0.0, 2 * np.pi, n0)
        t1 = rng.uniform(0.0, 2 * np.pi, n1)
        X = np.concatenate(
            [
                np.column_stack([np.cos(t0), np.sin(t0)]),
                0.5 * np.column_stack([np.cos(t1), np.sin(t1)]),
            ]
        )
        y = np.concatenate([np.zeros(n0, np.int8), np.ones(n1, np.int8)])
    else:  # overlap
        X = np.concatenate(
            [
                rng.normal(0.0, 1.0, size=(n0, 2)),
                rng.normal(0.0, 1.0, size=(n1, 2)) + np.array([2.0, 0.0]),
            ]
        )
        y = np.concatenate([np.zeros(n0, np.int8), np.ones(n1, np.int8)])

    if noise > 0:
        X = X + rng.normal(0.0, noise, size=X.shape)
    order = rng.permutation(n)
    return Dataset.from_arrays(f"synth-{kind}", X[order], y[order], feature_names=("x0", "x1"))
