"""Threshold repair, confusion-matrix rates, the CEM-vs-KNN comparison
pipeline, and QQ/scatter comparison data."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import Dataset, SplitPair, DataError
from .cem import CoarseningSpec, repeated_cem
from .knn import KIND_DELTA_PRIME, score_all_knn
from .scenario import INJECTION_GRID, inject_discrimination
from .tree import TreeModel, TreeParams, fit_tree

DEFAULT_THRESHOLDS = (5.0, 10.0, 15.0, 20.0, 25.0)


def _score_values(scores) -> np.ndarray:
    if hasattr(scores, "values") and not isinstance(scores, np.ndarray):
        return np.asarray(scores.values, dtype=float)
    return np.asarray(scores, dtype=float)


@dataclass(frozen=True)
class RepairResult:
    dataset: Dataset
    flipped: np.ndarray  # indices whose outcome was relabeled
    threshold: float | None


def repair(ds: Dataset, scores, q_d: float, method_kind: str,
           repair_value: int = 1) -> RepairResult:
    """Relabel the outcome of units flagged as discriminated.

    ``q_d`` is a percentile (0..100) of the defined scores. CEM scores mark
    discrimination with negative values, so units at or below the q_d-th
    percentile are flagged; KNN scores mark it with positive values, so units
    at or above the (100-q_d)-th percentile are flagged. q_d = 0 repairs
    nothing.
    """
    vals = _score_values(scores)
    if len(vals) != ds.n:
        raise DataError("scores must align with dataset rows")
    defined = ~np.isnan(vals)
    if not defined.any():
        raise DataError("all scores are undefined")
    if q_d <= 0:
        return RepairResult(ds, np.empty(0, dtype=np.int64), None)
    if method_kind == "cem":
        thr = float(np.percentile(vals[defined], q_d))
        flagged = defined & (vals <= thr)
    elif method_kind == "knn":
        thr = float(np.percentile(vals[defined], 100.0 - q_d))
        flagged = defined & (vals >= thr)
    else:
        raise ValueError(f"unknown method_kind {method_kind!r}")
    y = ds.y.copy()
    idx = np.flatnonzero(flagged & (y != repair_value))
    y[idx] = repair_value
    return RepairResult(ds.replace_column(ds.schema.outcome.name, y), idx, thr)


@dataclass(frozen=True)
class Rates:
    cpr: float
    tpr: float | None
    fnr: float | None


def classification_rates(tree: TreeModel, test: Dataset,
                         threshold: float = 0.5) -> Rates:
    """Accuracy (cpr), true positive ratio, false negative ratio on held-out
    data; tpr/fnr are None when the test set has no positive units."""
    if test.n == 0:
        raise DataError("empty test set")
    y = test.y
    yhat = tree.predict_label(test, threshold)
    cpr = float((yhat == y).mean())
    n_pos = int((y == 1).sum())
    if n_pos == 0:
        return Rates(cpr, None, None)
    tpr = float(((yhat == 1) & (y == 1)).sum() / n_pos)
    return Rates(cpr, tpr, 1.0 - tpr)


@dataclass
class EvalReport:
    frame: pd.DataFrame  # one row per (v1, v2, q_d, replication) with both methods
    m_scenarios: int
    seed: int
    config: dict = field(default_factory=dict)

    def summary(self) -> pd.DataFrame:
        cols = [c for c in self.frame.columns
                if c not in ("v1", "v2", "q_d", "replication")]
        return (self.frame.groupby(["v1", "v2", "q_d"])[cols]
                .agg(["mean", "std"]))

    def to_long(self) -> pd.DataFrame:
        return self.frame.melt(id_vars=["v1", "v2", "q_d", "replication"],
                               var_name="metric", value_name="value")

    def to_csv(self, path) -> None:
        self.to_long().to_csv(path, index=False)

    def to_json(self, path) -> None:
        payload = {
            "m_scenarios": self.m_scenarios,
            "seed": self.seed,
            "config": self.config,
            "rows": self.frame.to_dict(orient="records"),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def _ratio(a, b):
    if a is None or b is None or np.isnan(a) or np.isnan(b) or b == 0:
        return np.nan
    return a / b


def _replication_rows(train, test, base_tree, v1, v2, thresholds, rep,
                      seed, scen_idx, k, cem_reps, coarsening, tree_params):
    ss = np.random.SeedSequence([seed, scen_idx, rep]).generate_state(2)
    injected = inject_discrimination(train, v1, v2, base_tree, int(ss[0]))
    d = repeated_cem(injected, coarsening, repetitions=cem_reps,
                     seed=int(ss[1])).values
    cem_scores = np.where(injected.s == 1, d, np.nan)  # repair targets protected units
    knn_scores = score_all_knn(injected, k, KIND_DELTA_PRIME).values
    rows = []
    for q_d in thresholds:
        cell = {"v1": v1, "v2": v2, "q_d": q_d, "replication": rep}
        for method, scores in (("cem", cem_scores), ("knn", knn_scores)):
            repaired = repair(injected, scores, q_d, method)
            model = fit_tree(repaired.dataset, tree_params)
            r = classification_rates(model, test)
            cell[f"cpr_{method}"] = r.cpr
            cell[f"tpr_{method}"] = np.nan if r.tpr is None else r.tpr
            cell[f"fnr_{method}"] = np.nan if r.fnr is None else r.fnr
            cell[f"flips_{method}"] = len(repaired.flipped)
        for m in ("cpr", "tpr", "fnr"):
            cell[f"ratio_{m}"] = _ratio(cell[f"{m}_cem"], cell[f"{m}_knn"])
        rows.append(cell)
    return rows


def _job(args):
    return args[0], _replication_rows(*args[1])


def compare_cem_knn(base: SplitPair, grid=INJECTION_GRID,
                    thresholds=DEFAULT_THRESHOLDS, m_scenarios: int = 20,
                    seed: int = 0, k: int = 32, cem_reps: int = 100,
                    coarsening: CoarseningSpec | None = None,
                    tree_params: TreeParams = TreeParams(),
                    workers: int = 1) -> EvalReport:
    """For each injection scenario and replication: inject bias into the
    training split, score it with both methods, repair at each threshold,
    refit the tree, and evaluate on the untouched test split. Sub-seeds
    derive from (seed, scenario, replication), so output is independent of
    the worker count."""
    coarsening = coarsening or CoarseningSpec()
    base_tree = fit_tree(base.train, tree_params)
    jobs = []
    for scen_idx, (v1, v2) in enumerate(grid):
        for rep in range(m_scenarios):
            key = (scen_idx, rep)
            jobs.append((key, (base.train, base.test, base_tree, v1, v2,
                               tuple(thresholds), rep, seed, scen_idx, k,
                               cem_reps, coarsening, tree_params)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs, chunksize=1))
    else:
        results = [_job(j) for j in jobs]
    results.sort(key=lambda kv: kv[0])
    rows = [row for _, rws in results for row in rws]
    frame = pd.DataFrame(rows)
    config = {
        "grid": [list(g) for g in grid],
        "thresholds": list(thresholds),
        "k": k, "cem_reps": cem_reps,
        "coarsening": coarsening.to_dict(),
        "tree_params": vars(tree_params),
        "workers": workers,
    }
    return EvalReport(frame, m_scenarios, seed, config)


@dataclass(frozen=True)
class QQData:
    probs: np.ndarray
    quantiles_a: np.ndarray
    quantiles_b: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"prob": self.probs,
                             "quantile_a": self.quantiles_a,
                             "quantile_b": self.quantiles_b})


def qq_data(a, b, grid_size: int = 100) -> QQData:
    """Empirical quantiles of two score vectors on an even probability grid
    (linear interpolation between order statistics)."""
    va, vb = _score_values(a), _score_values(b)
    va, vb = va[~np.isnan(va)], vb[~np.isnan(vb)]
    if len(va) == 0 or len(vb) == 0:
        raise DataError("need at least one defined score on each side")
    probs = np.linspace(0.0, 1.0, grid_size)
    return QQData(probs, np.quantile(va, probs), np.quantile(vb, probs))


@dataclass(frozen=True)
class ScatterData:
    units: np.ndarray
    a: np.ndarray
    b: np.ndarray
    undefined_units: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"unit": self.units, "a": self.a, "b": self.b})


def scatter_pairs(a, b) -> ScatterData:
    """Pointwise pairing of two aligned score vectors by unit id; units
    undefined on either side are listed separately."""
    va, vb = _score_values(a), _score_values(b)
    if len(va) != len(vb):
        raise DataError("score vectors must be aligned")
    both = ~np.isnan(va) & ~np.isnan(vb)
    units = np.flatnonzero(both)
    return ScatterData(units, va[units], vb[units], np.flatnonzero(~both))
