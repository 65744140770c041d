"""Dataset transforms for the simulation studies: bias removal (four
strategies), bias injection (v1/v2 outcome flips near the decision boundary),
and a synthetic numeric variable correlated with the sensitive attribute."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, DataError
from .tree import TreeModel

INJECTION_GRID = [(2.5, 0.0), (5.0, 0.0), (10.0, 0.0),
                  (2.5, 2.5), (5.0, 5.0), (10.0, 10.0)]


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str  # remove_a | remove_b | remove_c | remove_d | inject | add_z
    v1: float = 0.0
    v2: float = 0.0
    quantile_window: tuple = (0.25, 0.75)
    rho: float = 0.5
    seed: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "v1": self.v1, "v2": self.v2,
                "quantile_window": list(self.quantile_window),
                "rho": self.rho, "seed": self.seed}


def remove_discrimination(ds: Dataset, strategy: str, tree: TreeModel,
                          seed: int, quantile_window=(0.25, 0.75)) -> Dataset:
    """Build a discrimination-free copy of ``ds``.

    (a)/(b): redraw Y for every unit as a coin flip at the tree's predicted
    probability (caller supplies the pruned tree for (a), unpruned for (b)).
    (c): randomly permute S among units whose predicted probability falls in
    the given quantile window. (d): randomly permute S across all units.
    """
    rng = np.random.default_rng(seed)
    s_name = ds.schema.sensitive.name
    y_name = ds.schema.outcome.name
    if strategy in ("a", "b"):
        p = tree.predict_proba(ds)
        new_y = (rng.random(ds.n) < p).astype(np.int8)
        return ds.replace_column(y_name, new_y)
    if strategy == "c":
        p = tree.predict_proba(ds)
        lo, hi = np.quantile(p, quantile_window)
        subset = np.flatnonzero((p >= lo) & (p <= hi))
        if len(subset) == 0:
            raise DataError("quantile window selects no units")
        s = ds.s.copy()
        s[subset] = s[subset][rng.permutation(len(subset))]
        return ds.replace_column(s_name, s)
    if strategy == "d":
        s = ds.s[rng.permutation(ds.n)]
        return ds.replace_column(s_name, s)
    raise ValueError(f"unknown removal strategy {strategy!r}")


def inject_discrimination(ds: Dataset, v1: float, v2: float,
                          tree: TreeModel, seed: int) -> Dataset:
    """Flip Y 1->0 for v1% of protected units and Y 0->1 for v2% of
    unprotected units, choosing eligible units whose predicted probability is
    nearest the 0.5 decision boundary (seeded shuffle breaks ties)."""
    rng = np.random.default_rng(seed)
    s, y = ds.s, ds.y.copy()
    p = tree.predict_proba(ds)

    def pick(eligible: np.ndarray, count: int) -> np.ndarray:
        if count > len(eligible):
            raise DataError(
                f"need {count} flips but only {len(eligible)} eligible units")
        shuffled = eligible[rng.permutation(len(eligible))]
        band = np.abs(p[shuffled] - 0.5)
        return shuffled[np.argsort(band, kind="stable")[:count]]

    n1 = int(np.rint(v1 / 100.0 * (s == 1).sum()))
    n2 = int(np.rint(v2 / 100.0 * (s == 0).sum()))
    if n1:
        y[pick(np.flatnonzero((s == 1) & (y == 1)), n1)] = 0
    if n2:
        y[pick(np.flatnonzero((s == 0) & (y == 0)), n2)] = 1
    return ds.replace_column(ds.schema.outcome.name, y)


def add_correlated_variable(ds: Dataset, rho: float, seed: int,
                            name: str = "Z") -> Dataset:
    """Append Z = S + gaussian noise with variance p(1-p)(1/rho^2 - 1), so the
    point-biserial correlation of Z with S is rho; Z carries no information
    about Y beyond S."""
    if not 0 < rho < 1:
        raise ValueError("rho must be in (0, 1)")
    s = ds.s.astype(float)
    p = s.mean()
    if p in (0.0, 1.0):
        raise DataError("degenerate S: cannot build a correlated variable")
    sigma2 = p * (1 - p) * (1 / rho**2 - 1)
    rng = np.random.default_rng(seed)
    z = s + rng.normal(0.0, np.sqrt(sigma2), ds.n)
    return ds.add_numeric_feature(name, z)
