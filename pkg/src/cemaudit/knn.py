"""Gower distance, within-group nearest neighbours, and the per-unit
neighbour-frequency discrimination measures."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import Dataset, DataError, NUMERIC

KIND_DELTA = "delta_eq1"          # compares frequency of y_j == y_i
KIND_DELTA_PRIME = "delta_prime_eq2"  # compares frequency of y_j == 0


@dataclass(frozen=True)
class GowerConfig:
    numeric_ranges: dict            # var -> (min, max) on the scoring data
    included_vars: tuple[str, ...]  # features only; S and Y never included

    def __post_init__(self):
        if not self.included_vars:
            raise ValueError("included_vars must be nonempty")
        for var, (lo, hi) in self.numeric_ranges.items():
            if hi < lo:
                raise ValueError(f"invalid range for {var!r}: ({lo}, {hi})")

    @classmethod
    def from_dataset(cls, ds: Dataset, included_vars=None) -> "GowerConfig":
        included = tuple(included_vars) if included_vars is not None else ds.schema.feature_names
        forbidden = {ds.schema.sensitive.name, ds.schema.outcome.name}
        if forbidden & set(included):
            raise ValueError("S and Y cannot be distance variables")
        ranges = {}
        for a in ds.schema.features:
            if a.name in included and a.kind == NUMERIC:
                col = ds.df[a.name].to_numpy(float)
                ranges[a.name] = (float(col.min()), float(col.max()))
        return cls(ranges, included)


class _GowerSpace:
    """Per-variable column arrays so distances to one query vectorize.
    Dissimilarities accumulate variable by variable as |a-b|/range (numeric)
    or mismatch (categorical), matching the scalar definition bit for bit."""

    def __init__(self, ds: Dataset, cfg: GowerConfig):
        self.columns = []
        for name in cfg.included_vars:
            attr = ds.schema[name]
            if attr.kind == NUMERIC:
                lo, hi = cfg.numeric_ranges[name]
                self.columns.append(("num", ds.df[name].to_numpy(float), hi - lo))
            else:
                codes, _ = pd.factorize(ds.df[name], sort=True)
                self.columns.append(("cat", codes, None))
        self.p = len(cfg.included_vars)

    def dist_to(self, i: int) -> np.ndarray:
        d = np.zeros(len(self.columns[0][1]))
        for kind, col, rng in self.columns:
            if kind == "num":
                if rng > 0:
                    d = d + np.abs(col - col[i]) / rng
            else:
                d = d + (col != col[i])
        return d / self.p


def gower_distance(u, v, cfg: GowerConfig) -> float:
    """Unweighted Gower dissimilarity between two records (mappings or Series):
    numeric |u-v|/range (0 when the range is 0), categorical exact mismatch."""
    total = 0.0
    for name in cfg.included_vars:
        if name in cfg.numeric_ranges:
            lo, hi = cfg.numeric_ranges[name]
            rng = hi - lo
            total += abs(float(u[name]) - float(v[name])) / rng if rng > 0 else 0.0
        else:
            total += 0.0 if u[name] == v[name] else 1.0
    return total / len(cfg.included_vars)


def knn_within_group(ds: Dataset, i: int, k: int, s: int,
                     cfg: GowerConfig | None = None,
                     _space: "_GowerSpace" = None) -> np.ndarray | None:
    """The k nearest units to i among units with S=s (excluding i itself);
    ties at the k-th distance break toward the smaller unit index. Returns
    None when the group holds fewer than k candidates."""
    cfg = cfg or GowerConfig.from_dataset(ds)
    space = _space or _GowerSpace(ds, cfg)
    candidates = np.flatnonzero(ds.s == s)
    candidates = candidates[candidates != i]
    return _neighbours(space.dist_to(i), candidates, k)


def _neighbours(d, candidates, k):
    if len(candidates) < k:
        return None
    dc = d[candidates]
    order = np.lexsort((candidates, dc))
    return candidates[order[:k]]


def _score_unit(ds, i, k, kind, space, cfg) -> float | None:
    d = space.dist_to(i)
    s = ds.s
    cand1 = np.flatnonzero(s == 1)
    cand0 = np.flatnonzero(s == 0)
    u1 = _neighbours(d, cand1[cand1 != i], k)
    u0 = _neighbours(d, cand0[cand0 != i], k)
    if u1 is None or u0 is None:
        return None
    y = ds.y
    if kind == KIND_DELTA:
        target = y[i]
    elif kind == KIND_DELTA_PRIME:
        target = 0
    else:
        raise ValueError(f"unknown measure kind {kind!r}")
    return float((y[u1] == target).mean() - (y[u0] == target).mean())


def delta_eq1(ds: Dataset, i: int, k: int, cfg: GowerConfig | None = None) -> float | None:
    """Difference in the frequency of the unit's own outcome between its k
    nearest protected and unprotected neighbours; None when either
    neighbourhood is undefined."""
    cfg = cfg or GowerConfig.from_dataset(ds)
    return _score_unit(ds, i, k, KIND_DELTA, _GowerSpace(ds, cfg), cfg)


def delta_prime_eq2(ds: Dataset, i: int, k: int, cfg: GowerConfig | None = None) -> float | None:
    """As delta_eq1 but counting negative outcomes (y_j = 0) in both groups;
    positive values indicate discrimination against the protected group."""
    cfg = cfg or GowerConfig.from_dataset(ds)
    return _score_unit(ds, i, k, KIND_DELTA_PRIME, _GowerSpace(ds, cfg), cfg)


@dataclass
class KnnScoreVector:
    values: np.ndarray  # NaN marks undefined entries
    k: int
    kind: str
    target_units: str = "s1"  # 's1' or 'all'
    seed: int | None = None

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "unit": np.arange(len(self.values)),
            "score": self.values,
            "defined": self.defined,
        })

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    def metadata(self) -> dict:
        return {"method": "knn", "k": self.k, "kind": self.kind,
                "target_units": self.target_units}

    def save_metadata(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


def score_all_knn(ds: Dataset, k: int = 32, kind: str = KIND_DELTA_PRIME,
                  cfg: GowerConfig | None = None,
                  target_units: str = "s1") -> KnnScoreVector:
    """Neighbour-frequency score for every protected unit (or every unit when
    ``target_units='all'``); undefined neighbourhoods yield NaN."""
    cfg = cfg or GowerConfig.from_dataset(ds)
    space = _GowerSpace(ds, cfg)
    if target_units == "s1":
        targets = np.flatnonzero(ds.s == 1)
    elif target_units == "all":
        targets = np.arange(ds.n)
    else:
        raise ValueError(f"unknown target_units {target_units!r}")
    values = np.full(ds.n, np.nan)
    for i in targets:
        v = _score_unit(ds, int(i), k, kind, space, cfg)
        if v is not None:
            values[i] = v
    return KnnScoreVector(values, k, kind, target_units)


def flag_discriminated(scores: KnnScoreVector, tau: float) -> np.ndarray:
    """Indices of units whose defined score is >= tau."""
    vals = scores.values
    return np.flatnonzero(~np.isnan(vals) & (vals >= tau))
