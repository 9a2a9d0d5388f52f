"""Benchmark protocol: repeated stratified splits, one shared forest per
split, per-method metrics, paired statistics, and report emission.

Every repeat r of a dataset uses seed ``seed_base + r`` for both the 70/30
stratified split and the forest, and every requested method predicts from
that same forest, so method columns differ only in how votes are aggregated.
Per-dataset failures are isolated and recorded rather than aborting a sweep.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import baselines, weighting
from .data import Dataset, stratified_split
from .forest import fit_forest, forest_votes
from .stats import quintile_table, wilcoxon_signed_rank

__all__ = [
    "EvalReport",
    "METHOD_NAMES",
    "RunRecord",
    "evaluate",
]

METHOD_NAMES = ("rf", "paw", "paw-amp", "naive", "wrf", "kne", "knu")

SCHEMA_VERSION = 1
RECALL_REGRESSION_PP = 0.002  # 0.2 percentage points, absolute recall units


@dataclass(frozen=True)
class RunRecord:
    """Metrics of one (dataset, method, repeat) cell."""

    dataset: str
    method: str
    repeat: int
    seed: int
    accuracy: float
    minority_recall: float
    majority_recall: float
    M: float
    S: float
    K_star: int | None


class _RepeatContext:
    """Lazily shares the per-repeat artifacts (forest, votes, tables) all
    methods draw from, guaranteeing identical per-tree votes per sample."""

    def __init__(self, ds: Dataset, trees: int, seed: int, test_fraction: float,
                 cv_folds: int, cv_trees: int | None, k_candidates, weight_variant: str,
                 neighbors_k: int):
        self.ds = ds
        self.trees = trees
        self.seed = seed
        self.test_fraction = test_fraction
        self.cv_folds = cv_folds
        self.cv_trees = cv_trees
        self.k_candidates = tuple(k_candidates)
        self.weight_variant = weight_variant
        self.neighbors_k = neighbors_k

    @cached_property
    def plan(self):
        return stratified_split(self.ds, self.test_fraction, self.seed)

    @cached_property
    def train(self) -> Dataset:
        return self.ds.take(self.plan.train_indices)

    @cached_property
    def X_test(self):
        return self.ds.features[self.plan.test_indices]

    @cached_property
    def y_test(self):
        return self.ds.labels[self.plan.test_indices]

    @cached_property
    def forest(self):
        return fit_forest(self.train, self.trees, self.seed)

    @cached_property
    def votes_test(self):
        return forest_votes(self.forest, self.X_test)

    @cached_property
    def proba_rf(self):
        return self.votes_test.leaf_prob.sum(axis=0) / float(self.forest.T)

    @cached_property
    def votes_train(self):
        return forest_votes(self.forest, self.train.features)

    @cached_property
    def mass_spread(self) -> tuple[float, float]:
        M = weighting.boundary_mass(self.forest, self.train, votes=self.votes_train)
        S = weighting.boundary_spread(self.forest, self.train, votes=self.votes_train)
        return M, S

    @cached_property
    def cv_table_records(self):
        return weighting.estimate_weight_table_cv(
            self.train, self.trees, self.seed, folds=self.cv_folds, cv_trees=self.cv_trees
        )

    @cached_property
    def table(self) -> weighting.WeightTable:
        if self.weight_variant == "oob":
            return weighting.estimate_weight_table_oob(self.forest, self.train, votes=self.votes_train)
        return self.cv_table_records[0]

    @cached_property
    def k_star(self) -> int:
        table, records = self.cv_table_records
        M, S = self.mass_spread
        return weighting.select_K(records, M, S, table, candidates=self.k_candidates)

    @cached_property
    def amp_table(self) -> weighting.WeightTable:
        table = self.cv_table_records[0]
        if self.k_star == 0:
            return table
        M, S = self.mass_spread
        return weighting.amplify(table, 1.0 + self.k_star * M * S)

    @cached_property
    def wrf_w(self):
        return baselines.wrf_weights(self.forest, self.train, votes=self.votes_train)

    @cached_property
    def nn_index(self):
        return baselines.build_neighbor_index(self.train, k=self.neighbors_k)

    @cached_property
    def nn_correct(self):
        return self.votes_train.ci == self.train.labels[None, :]

    def predict(self, method: str) -> np.ndarray:
        if method == "rf":
            return self.proba_rf
        if method == "paw":
            return weighting.predict_weighted(
                self.forest, self.table, self.X_test, votes=self.votes_test, base_proba=self.proba_rf
            )
        if method == "paw-amp":
            if self.weight_variant != "cv":
                raise ValueError("amplification requires the cv weight variant")
            return weighting.predict_weighted(
                self.forest, self.amp_table, self.X_test, votes=self.votes_test, base_proba=self.proba_rf
            )
        if method == "naive":
            return weighting.predict_naive(self.forest, self.X_test, votes=self.votes_test)
        if method == "wrf":
            return baselines.wrf_predict(self.forest, self.wrf_w, self.X_test, votes=self.votes_test)
        if method == "kne":
            return baselines.knora_e_predict(
                self.forest, self.nn_index, self.X_test, votes=self.votes_test, correct=self.nn_correct
            )
        if method == "knu":
            return baselines.knora_u_predict(
                self.forest, self.nn_index, self.X_test, votes=self.votes_test, correct=self.nn_correct
            )
        raise ValueError(f"unknown method {method!r}; choose from {METHOD_NAMES}")


def _metrics(proba: np.ndarray, y: np.ndarray, minority: int) -> tuple[float, float, float]:
    pred = np.argmax(proba, axis=1)
    accuracy = float((pred == y).mean())
    recalls = {}
    for cls in (0, 1):
        mask = y == cls
        recalls[cls] = float((pred[mask] == cls).mean()) if mask.any() else float("nan")
    return accuracy, recalls[minority], recalls[1 - minority]


@dataclass
class EvalReport:
    """Aggregated benchmark results; serializes to a versioned JSON schema."""

    protocol: dict
    dataset_info: dict
    runs: list[RunRecord]
    per_dataset: dict
    vs_rf: dict
    indicators: dict
    quintiles: list | None
    errors: dict = field(default_factory=dict)

    def delta_acc(self, dataset: str, method: str) -> float:
        """Per-dataset mean accuracy difference of a method against rf."""
        cols = self.per_dataset[dataset]
        return cols[method]["accuracy"] - cols["rf"]["accuracy"]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "protocol": self.protocol,
            "datasets": self.dataset_info,
            "per_dataset": self.per_dataset,
            "vs_rf": self.vs_rf,
            "indicators": self.indicators,
            "quintiles": self.quintiles,
            "errors": self.errors,
            "runs": [asdict(r) for r in self.runs],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True, allow_nan=True)

    def write(self, out_dir) -> None:
        """Emit report.json plus the per-table CSV mirrors."""
        import pandas as pd

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())

        rows = []
        for method, st in self.vs_rf.items():
            rows.append({"method": method, **{k: v for k, v in st.items() if k != "per_dataset_delta"}})
        if rows:
            pd.DataFrame(rows).to_csv(out / "aggregate.csv", index=False)

        recs = []
        for ds, cols in self.per_dataset.items():
            for method, metrics in cols.items():
                recs.append({"dataset": ds, "method": method, **metrics})
        pd.DataFrame(recs).to_csv(out / "per_dataset.csv", index=False)

        ind_rows = []
        for ds, ind in self.indicators.items():
            row = {"dataset": ds, **ind}
            for method in self.vs_rf:
                row[f"delta_acc_{method}"] = self.vs_rf[method]["per_dataset_delta"].get(ds)
            ind_rows.append(row)
        if ind_rows:
            pd.DataFrame(ind_rows).to_csv(out / "indicators.csv", index=False)

        if self.quintiles:
            pd.DataFrame(self.quintiles).to_csv(out / "quintiles.csv", index=False)

    def summary_lines(self) -> list[str]:
        lines = []
        for method, st in self.vs_rf.items():
            p = st["wilcoxon_p"]
            lines.append(
                f"{method:8s} mean dAcc {st['mean_delta_acc']:+.4f}  "
                f"W/T/L {st['wins']}/{st['ties']}/{st['losses']}  "
                f"p {'n/a' if p is None else format(p, '.4g')}  "
                f"min-recall regressions {st['minority_regressions']}/{st['n_datasets']}  "
                f"maj {st['majority_regressions']}/{st['n_datasets']}"
            )
        return lines


def evaluate(
    datasets,
    methods=("rf", "paw"),
    repeats: int = 30,
    trees: int = 300,
    seed_base: int = 42,
    test_fraction: float = 0.3,
    cv_folds: int = 5,
    cv_trees: int | None = None,
    k_candidates=weighting.K_CANDIDATES,
    weight_variant: str = "cv",
    neighbors_k: int = baselines.DEFAULT_K,
    verbose: bool = False,
) -> EvalReport:
    """Run the full protocol over datasets x methods x repeats.

    Methods must include "rf" for delta columns to be defined.  The weight
    variant selects the paw table source ("cv" fits inner forests per fold,
    "oob" reuses the shared forest's out-of-bag votes).
    """
    methods = tuple(methods)
    unknown = set(methods) - set(METHOD_NAMES)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    if weight_variant not in ("cv", "oob"):
        raise ValueError("weight_variant must be cv or oob")

    runs: list[RunRecord] = []
    errors: dict[str, str] = {}
    dataset_info: dict[str, dict] = {}
    for ds in datasets:
        try:
            ds_runs = []
            for r in range(repeats):
                seed = seed_base + r
                ctx = _RepeatContext(
                    ds, trees, seed, test_fraction, cv_folds, cv_trees,
                    k_candidates, weight_variant, neighbors_k,
                )
                M, S = ctx.mass_spread
                for method in methods:
                    proba = ctx.predict(method)
                    acc, min_rec, maj_rec = _metrics(proba, ctx.y_test, ds.minority_class)
                    ds_runs.append(
                        RunRecord(
                            dataset=ds.name, method=method, repeat=r, seed=seed,
                            accuracy=acc, minority_recall=min_rec, majority_recall=maj_rec,
                            M=M, S=S,
                            K_star=ctx.k_star if method == "paw-amp" else None,
                        )
                    )
                if verbose:
                    print(f"  {ds.name} repeat {r + 1}/{repeats} done")
        except Exception as exc:  # isolate per-dataset failures
            errors[ds.name] = f"{type(exc).__name__}: {exc}"
            continue
        runs.extend(ds_runs)
        dataset_info[ds.name] = {
            "n": ds.n,
            "p": ds.p,
            "minority_class": int(ds.minority_class),
            "minority_fraction": round(ds.minority_fraction(), 6),
        }
        if verbose:
            print(f"{ds.name}: done")

    report = _assemble(runs, dataset_info, errors, methods, {
        "repeats": repeats,
        "trees": trees,
        "seed_base": seed_base,
        "test_fraction": test_fraction,
        "cv_folds": cv_folds,
        "cv_trees": cv_trees,
        "k_candidates": list(k_candidates),
        "weight_variant": weight_variant,
        "neighbors_k": neighbors_k,
        "methods": list(methods),
    })
    return report


def _assemble(runs, dataset_info, errors, methods, protocol) -> EvalReport:
    names = list(dataset_info)
    per_dataset: dict[str, dict] = {}
    for ds in names:
        per_dataset[ds] = {}
        for method in methods:
            rows = [r for r in runs if r.dataset == ds and r.method == method]
            per_dataset[ds][method] = {
                "accuracy": float(np.mean([r.accuracy for r in rows])),
                "minority_recall": float(np.mean([r.minority_recall for r in rows])),
                "majority_recall": float(np.mean([r.majority_recall for r in rows])),
            }

    indicators: dict[str, dict] = {}
    for ds in names:
        rows = [r for r in runs if r.dataset == ds and r.method == methods[0]]
        mean_m = float(np.mean([r.M for r in rows]))
        mean_s = float(np.mean([r.S for r in rows]))
        kstars = [r.K_star for r in runs if r.dataset == ds and r.K_star is not None]
        k_star = int(np.bincount(kstars).argmax()) if kstars else 0
        indicators[ds] = {"M": mean_m, "S": mean_s, "MS": mean_m * mean_s, "K_star": k_star}

    vs_rf: dict[str, dict] = {}
    if "rf" in methods:
        for method in methods:
            if method == "rf":
                continue
            deltas = {ds: per_dataset[ds][method]["accuracy"] - per_dataset[ds]["rf"]["accuracy"] for ds in names}
            dm = {ds: per_dataset[ds][method]["minority_recall"] - per_dataset[ds]["rf"]["minority_recall"] for ds in names}
            dj = {ds: per_dataset[ds][method]["majority_recall"] - per_dataset[ds]["rf"]["majority_recall"] for ds in names}
            arr = np.array(list(deltas.values()))
            try:
                w_stat, p = wilcoxon_signed_rank(arr)
            except ValueError:
                w_stat, p = None, None
            vs_rf[method] = {
                "n_datasets": len(names),
                "mean_delta_acc": float(arr.mean()) if arr.size else None,
                "wins": int((arr > 0).sum()),
                "ties": int((arr == 0).sum()),
                "losses": int((arr < 0).sum()),
                "wilcoxon_W": w_stat,
                "wilcoxon_p": p,
                "mean_delta_minority_recall": float(np.mean(list(dm.values()))) if dm else None,
                "mean_delta_majority_recall": float(np.mean(list(dj.values()))) if dj else None,
                "minority_regressions": int(sum(v < -RECALL_REGRESSION_PP for v in dm.values())),
                "majority_regressions": int(sum(v < -RECALL_REGRESSION_PP for v in dj.values())),
                "per_dataset_delta": {ds: float(v) for ds, v in deltas.items()},
            }

    quintiles = None
    focus = next((m for m in ("paw", "paw-amp") if m in vs_rf), None)
    if focus and len(names) >= 5:
        ms = [indicators[ds]["MS"] for ds in names]
        deltas = [vs_rf[focus]["per_dataset_delta"][ds] for ds in names]
        quintiles = quintile_table(ms, deltas, labels=names)

    return EvalReport(
        protocol=protocol,
        dataset_info=dataset_info,
        runs=runs,
        per_dataset=per_dataset,
        vs_rf=vs_rf,
        indicators=indicators,
        quintiles=quintiles,
        errors=errors,
    )
