"""Diagnostic tables: pattern frequencies, per-cell accuracies, spreads, and
per-point best-pattern maps.

All diagnostics pool held-out (tree, sample) votes collected by stratified
cross-validation: an inner forest is fitted per fold and every validation
vote contributes one (region, pattern, predicted-class, correct) record.
Display tables use coarse 0.20-wide region buckets; predicted classes are
reported as majority/minority relative to each dataset's label counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Dataset, stratified_kfold
from .forest import _fit_forest_arrays, forest_votes
from .patterns import PATTERN_NAMES
from .weighting import _child_seed, bucket_array

__all__ = [
    "DiagnosticTables",
    "collect_cv_votes",
    "diagnostics",
    "per_point_best_pattern",
]

REGION_LABELS = ("[.0,.2)", "[.2,.4)", "[.4,.6)", "[.6,.8)", "[.8,1.]")
BEST_PATTERN_MIN_CELL = 30


@dataclass(frozen=True)
class CvVotes:
    """Flat held-out vote records for one dataset (one row per tree-sample pair)."""

    pb: np.ndarray        # 10-bucket region index
    pattern: np.ndarray
    ci: np.ndarray        # raw predicted label
    correct: np.ndarray
    sample: np.ndarray    # training-row index of the validated sample
    minority_class: int

    @property
    def region5(self) -> np.ndarray:
        return self.pb // 2

    @property
    def pred_group(self) -> np.ndarray:
        """0 where the tree predicts the majority label, 1 for minority."""
        return (self.ci == self.minority_class).astype(np.int8)


def collect_cv_votes(ds: Dataset, trees: int, seed: int, folds: int = 5) -> CvVotes:
    """Held-out votes of inner forests over a stratified k-fold pass."""
    plan = stratified_kfold(ds, folds, seed=_child_seed(seed, 11))
    pbs, pats, cis, cors, samples = [], [], [], [], []
    for k, (tr_idx, val_idx) in enumerate(plan):
        inner = _fit_forest_arrays(ds.features[tr_idx], ds.labels[tr_idx], trees, _child_seed(seed, 13, k))
        votes = forest_votes(inner, ds.features[val_idx])
        proba = votes.leaf_prob.sum(axis=0) / float(trees)
        fp = proba[np.arange(val_idx.size)[None, :], votes.ci]
        pbs.append(bucket_array(fp).ravel())
        pats.append(votes.pattern.ravel().astype(np.int64))
        cis.append(votes.ci.ravel().astype(np.int64))
        cors.append((votes.ci == ds.labels[val_idx][None, :]).ravel())
        samples.append(np.broadcast_to(val_idx[None, :], votes.ci.shape).ravel())
    return CvVotes(
        pb=np.concatenate(pbs),
        pattern=np.concatenate(pats),
        ci=np.concatenate(cis),
        correct=np.concatenate(cors),
        sample=np.concatenate(samples),
        minority_class=ds.minority_class,
    )


@dataclass
class DiagnosticTables:
    pattern_frequency: pd.DataFrame
    region_pattern_accuracy: pd.DataFrame
    pattern_class_accuracy: pd.DataFrame
    cell_spread: pd.DataFrame
    best_pattern: pd.DataFrame

    def write(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.pattern_frequency.to_csv(out / "pattern_frequency.csv", index=False)
        self.region_pattern_accuracy.to_csv(out / "region_pattern_accuracy.csv", index=False)
        self.pattern_class_accuracy.to_csv(out / "pattern_class_accuracy.csv", index=False)
        self.cell_spread.to_csv(out / "cell_spread.csv", index=False)
        self.best_pattern.to_csv(out / "best_pattern.csv", index=False)


def _acc(correct: np.ndarray, mask: np.ndarray) -> float:
    m = mask.sum()
    return float(correct[mask].sum() / m) if m else float("nan")


def diagnostics(datasets, trees: int = 300, seed: int = 42, folds: int = 5) -> DiagnosticTables:
    """Build the full diagnostic table set over one CV pass per dataset."""
    per_ds = {ds.name: collect_cv_votes(ds, trees, seed, folds) for ds in datasets}

    freq_rows = []
    for name, v in per_ds.items():
        counts = np.bincount(v.pattern, minlength=6)
        freq_rows.append({"dataset": name, **{p: counts[i] / counts.sum() for i, p in enumerate(PATTERN_NAMES)}})
    freq = pd.DataFrame(freq_rows)
    freq.loc[len(freq)] = {"dataset": "mean", **{p: freq[p].mean() for p in PATTERN_NAMES}}

    all_v = {
        "region5": np.concatenate([v.region5 for v in per_ds.values()]),
        "pattern": np.concatenate([v.pattern for v in per_ds.values()]),
        "group": np.concatenate([v.pred_group for v in per_ds.values()]),
        "correct": np.concatenate([v.correct for v in per_ds.values()]),
    }
    total_pairs = all_v["correct"].size

    rp_rows = []
    for r, label in enumerate(REGION_LABELS):
        row = {"region": label}
        in_r = all_v["region5"] == r
        for i, p in enumerate(PATTERN_NAMES):
            row[p] = _acc(all_v["correct"], in_r & (all_v["pattern"] == i))
        rp_rows.append(row)
    region_pattern = pd.DataFrame(rp_rows)

    pc_rows = []
    for i, p in enumerate(PATTERN_NAMES):
        is_p = all_v["pattern"] == i
        maj = is_p & (all_v["group"] == 0)
        mino = is_p & (all_v["group"] == 1)
        pc_rows.append(
            {
                "pattern": p,
                "majority_acc": _acc(all_v["correct"], maj),
                "majority_n": int(maj.sum()),
                "minority_acc": _acc(all_v["correct"], mino),
                "minority_n": int(mino.sum()),
            }
        )
    pattern_class = pd.DataFrame(pc_rows)

    spread_rows = []
    for r, label in enumerate(REGION_LABELS):
        for g, gname in ((0, "maj"), (1, "min")):
            cell = (all_v["region5"] == r) & (all_v["group"] == g)
            accs = {}
            for i, p in enumerate(PATTERN_NAMES):
                m = cell & (all_v["pattern"] == i)
                if m.sum() >= BEST_PATTERN_MIN_CELL:
                    accs[p] = _acc(all_v["correct"], m)
            row = {
                "region": label,
                "pred_class": gname,
                "share": float(cell.sum() / total_pairs),
                "marginal_acc": _acc(all_v["correct"], cell),
            }
            if len(accs) >= 2:
                best = max(accs, key=accs.get)
                worst = min(accs, key=accs.get)
                row.update(spread=accs[best] - accs[worst], best=best, worst=worst)
            else:
                row.update(spread=float("nan"), best=None, worst=None)
            spread_rows.append(row)
    cell_spread = pd.DataFrame(spread_rows)

    best_rows = []
    for name, v in per_ds.items():
        for r, label in enumerate(REGION_LABELS):
            for g, gname in ((0, "maj"), (1, "min")):
                cell = (v.region5 == r) & (v.pred_group == g)
                accs = {}
                for i, p in enumerate(PATTERN_NAMES):
                    m = cell & (v.pattern == i)
                    if m.sum() >= BEST_PATTERN_MIN_CELL:
                        accs[p] = _acc(v.correct, m)
                best_rows.append(
                    {
                        "dataset": name,
                        "region": label,
                        "pred_class": gname,
                        "best_pattern": max(accs, key=accs.get) if accs else None,
                    }
                )
    best_pattern = pd.DataFrame(best_rows)

    return DiagnosticTables(
        pattern_frequency=freq,
        region_pattern_accuracy=region_pattern,
        pattern_class_accuracy=pattern_class,
        cell_spread=cell_spread,
        best_pattern=best_pattern,
    )


def per_point_best_pattern(ds: Dataset, trees: int = 300, seed: int = 42, folds: int = 5) -> pd.DataFrame:
    """Per-point map for 2-feature datasets: which flip pattern's trees are
    most accurate on each point, with no region or class conditioning.

    Each point is scored from its held-out votes only; ties and patterns
    with no votes resolve toward the lower pattern code.  Rows are
    (x0, x1, true_class, best_pattern).
    """
    if ds.p != 2:
        raise ValueError("per-point maps are defined for 2-feature datasets")
    v = collect_cv_votes(ds, trees, seed, folds)
    n = ds.n
    lin = v.sample * 6 + v.pattern
    counts = np.bincount(lin, minlength=n * 6).reshape(n, 6)
    hits = np.bincount(lin, weights=v.correct.astype(np.float64), minlength=n * 6).reshape(n, 6)
    with np.errstate(invalid="ignore"):
        acc = np.where(counts > 0, hits / np.maximum(counts, 1), -1.0)
    best = np.argmax(acc, axis=1)
    return pd.DataFrame(
        {
            "x0": ds.features[:, 0],
            "x1": ds.features[:, 1],
            "true_class": ds.labels,
            "best_pattern": [PATTERN_NAMES[b] for b in best],
        }
    )
